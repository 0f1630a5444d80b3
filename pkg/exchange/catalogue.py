"""
Embedded catalogue: one item per grouped campus node, one listing per resource group.

Item ids are "<provider>/<server id>/<group>/<node>" and group ids drop the
node. Nodes without a resource group are not published.
"""
from typing import Any, Dict, List, Optional, Tuple

from core.campus import Campus, CampusNode, ResourceGroupSpec
from exchange.errors import UnknownItem
from utils.logging_setup import get_logger

logger = get_logger("Catalogue")

CONTEXT = "https://voc.iudx.org.in/"
ACTIVE = "ACTIVE"
INACTIVE = "INACTIVE"


class Catalogue:
    def __init__(self, campus: Campus, server_id: str):
        self.campus = campus
        self.server_id = server_id
        self.inactive: set = set()

    # ------------------------------------------------------------------
    # ids
    # ------------------------------------------------------------------
    def group_id(self, group: str) -> str:
        return f"{self.campus.provider}/{self.server_id}/{group}"

    def item_id(self, node: CampusNode) -> str:
        return f"{self.group_id(node.group)}/{node.node_id}"

    def resolve(self, item_id: str) -> Tuple[ResourceGroupSpec, CampusNode]:
        """Group and node behind a resource item id (the bare node id is accepted too)."""
        node_id = item_id.rsplit("/", 1)[-1]
        node = self.campus.find(node_id)
        if node is None or not node.group:
            raise UnknownItem(f"No catalogue item {item_id}")
        if "/" in item_id and item_id != self.item_id(node):
            raise UnknownItem(f"No catalogue item {item_id}")
        return self.campus.groups[node.group], node

    def group_for(self, group_id: str) -> Optional[ResourceGroupSpec]:
        for spec in self.campus.groups.values():
            if self.group_id(spec.name) == group_id:
                return spec
        return None

    # ------------------------------------------------------------------
    # documents
    # ------------------------------------------------------------------
    def item(self, node: CampusNode) -> Dict[str, Any]:
        group = self.campus.groups[node.group]
        location: Dict[str, Any] = {
            "geometry": {"coordinates": [node.lon, node.lat], "type": "Point"},
            "type": "Place",
        }
        if node.address:
            location["address"] = node.address
        return {
            "@context": CONTEXT,
            "type": list(group.types),
            "id": self.item_id(node),
            "name": node.node_id,
            "label": node.label,
            "description": f"{node.label} {group.description_suffix}".strip(),
            "tags": list(group.tags),
            "location": location,
            "provider": self.campus.provider,
            "resourceGroup": self.group_id(group.name),
            "itemStatus": INACTIVE if node.node_id in self.inactive else ACTIVE,
            "itemCreatedAt": node.item_created_at,
        }

    def group_listing(self, group: ResourceGroupSpec) -> Dict[str, Any]:
        members = self.campus.nodes_in_group(group.name)
        return {
            "@context": CONTEXT,
            "type": ["iudx:ResourceGroup"],
            "id": self.group_id(group.name),
            "name": group.name,
            "accessPolicy": "OPEN" if group.is_open else "SECURE",
            "provider": self.campus.provider,
            "dataModel": self.data_model(group),
            "items": [self.item(n) for n in members],
            "totalHits": len(members),
        }

    def data_model(self, group: ResourceGroupSpec) -> Dict[str, str]:
        """Exchange attribute -> descriptor parameter name for the group's device model."""
        members = self.campus.nodes_in_group(group.name)
        if not members:
            return {}
        return {p.exchange: p.name for p in members[0].model.parameters}

    def lookup(self, item_id: str) -> Dict[str, Any]:
        """
        Item document for a resource id, or the member listing for a group id.

        Raises:
            UnknownItem: the id names neither an item nor a group
        """
        group = self.group_for(item_id)
        if group is not None:
            return self.group_listing(group)
        _, node = self.resolve(item_id)
        return self.item(node)

    def groups(self) -> List[Dict[str, Any]]:
        return [
            {
                "id": self.group_id(g.name),
                "name": g.name,
                "accessPolicy": "OPEN" if g.is_open else "SECURE",
                "items": len(self.campus.nodes_in_group(g.name)),
            }
            for g in self.campus.groups.values()
        ]

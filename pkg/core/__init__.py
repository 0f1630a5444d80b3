# oneM2M-style resource tree: access control, bounded containers, groups, discovery

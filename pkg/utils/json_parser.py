import json
import re
from typing import List, Optional

_ARRAY = re.compile(r"^\s*\[(.*)\]\s*$", re.DOTALL)
# one token up to the next top-level comma; quoted strings may hold commas and escaped quotes
_TOKEN = re.compile(r"""\s*("(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*'|[^,"']*?)\s*(,|\Z)""", re.DOTALL)


def extract_json_block(text: str):
    """
    Extract a JSON object from CIN content, even if it carries leading or
    trailing noise (device firmware sometimes pads descriptor strings).
    Returns a dict or None.
    """
    if not text:
        return None

    match = re.search(r"\{.*\}", text.strip(), re.DOTALL)
    if not match:
        return None

    try:
        return json.loads(match.group(0))
    except Exception:
        return None


def extract_array_tokens(text: str) -> Optional[List[str]]:
    """
    Split a bracketed positional array ("[1645254204, 867.00, nan]") into its
    raw tokens. Quoted tokens keep their quotes and may contain commas.
    Returns None if the text is not a single bracketed array.
    """
    if text is None:
        return None

    match = _ARRAY.match(text)
    if not match:
        return None

    body = match.group(1).strip()
    if not body:
        return []

    tokens = []
    pos = 0
    while True:
        token = _TOKEN.match(body, pos)
        if token is None:
            return None
        tokens.append(token.group(1))
        if not token.group(2):
            return tokens
        pos = token.end()

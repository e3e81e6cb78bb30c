"""
This module generates the ids of run ledger rows.

Ids are UUID4 values stored as strings, since SQLite has no native UUID type.
"""
import uuid


def generate_uuid() -> str:
    """
    Returns:
        str: A new random UUID in canonical text form.
    """
    return str(uuid.uuid4())

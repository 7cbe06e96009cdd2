from .crypto import KeyPair, keygen
from .model import make_transaction
from .nodes import ServiceNode
from .anchor import AuxiliaryNode
from .registry import Registry, Role
from .verify import TrustAssumptions, Verdict, verify_level1, verify_level2, verify_level3

__all__ = [
    "KeyPair",
    "keygen",
    "make_transaction",
    "ServiceNode",
    "AuxiliaryNode",
    "Registry",
    "Role",
    "TrustAssumptions",
    "Verdict",
    "verify_level1",
    "verify_level2",
    "verify_level3",
]

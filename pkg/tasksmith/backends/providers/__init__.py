from .base import ProviderAdapter
from .registry import REGISTRY, ProviderRegistry

__all__ = ["ProviderAdapter", "ProviderRegistry", "REGISTRY"]

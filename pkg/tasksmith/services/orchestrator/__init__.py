from .candidate_pool import CandidatePool, PoolEntry, nearest_neighbors, update_candidate_pool
from .checkpoint import Checkpoint, StreamState, find_latest_checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "CandidatePool",
    "Checkpoint",
    "PoolEntry",
    "StreamState",
    "find_latest_checkpoint",
    "load_checkpoint",
    "nearest_neighbors",
    "save_checkpoint",
    "update_candidate_pool",
]

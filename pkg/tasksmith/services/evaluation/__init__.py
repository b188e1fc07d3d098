from .diversity import DiversityReport, distinct_ngram_ratio, diversity_report, write_diversity_report
from .orders import OrderRow, inverse_permutation, order_indices, order_rows, permute_stream, stage_of, write_orders_report
from .toy_family import ToyFamilySpec, ToyTaskFamily, expand_family, materialize_family
from .transfer import ForwardTransferReport, TransferMatrix, TransferRow, build_transfer_matrix, eval_forward_transfer, write_forward_transfer, write_transfer_matrix
from .utility import expected_toy_utility, toy_utility

__all__ = [
    "DiversityReport",
    "ForwardTransferReport",
    "OrderRow",
    "ToyFamilySpec",
    "ToyTaskFamily",
    "TransferMatrix",
    "TransferRow",
    "build_transfer_matrix",
    "distinct_ngram_ratio",
    "diversity_report",
    "eval_forward_transfer",
    "expand_family",
    "expected_toy_utility",
    "inverse_permutation",
    "materialize_family",
    "order_indices",
    "order_rows",
    "permute_stream",
    "stage_of",
    "toy_utility",
    "write_diversity_report",
    "write_forward_transfer",
    "write_orders_report",
    "write_transfer_matrix",
]

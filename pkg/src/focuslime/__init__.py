"""Budget-aware black-box word attribution for long documents.

A cheap proxy model narrows the document down to an active neighbourhood, then
the expensive target model is perturbed only inside it and explained with a
kernel-weighted linear surrogate.
"""

from .errors import (BudgetExhausted, ConfigError, ContractViolation, DegenerateFocus, FocusLimeError,
                     InsufficientSamples, ModelError, NetworkError, NoEvidence, UnparseableResponse)
from .evaluation import (AOPCCurve, AlignmentReport, NarrowingTrace, aopc_k, aopc_summary, delete_top_k,
                         narrowing_study, recall_at_ratio)
from .focus import ExplainConfig, Explanation, ScoutConfig, explain, scout, scrutinize
from .models import BlackBoxModel, Budget, ModelSpec, Prediction, QueryCache, SyntheticModel, cost, k_max
from .perturb import apply_mask, sample_constrained, sample_unconstrained
from .segmenter import Document, Level, Segment, SegmentTree, WordUnit, build_tree, decompose, tokenize
from .surrogate import Attribution, KernelConfig, SurrogateFit, fit, kernel_weight, to_attribution, top_k_features

__version__ = "0.1.0"

from __future__ import absolute_import

from .importance import (
    ImportanceReport, score_heads_layer, score_mlp_layer, compute_importance,
    save_report, load_report, rank_heads
)
from .plan import (
    PruningPlan, STRATEGIES, RATIO_BASES, per_layer_count, build_plan, save_plan, load_plan
)
from .surgery import apply_plan, achieved_ratio, prune_layer

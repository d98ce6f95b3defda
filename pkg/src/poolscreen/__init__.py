"""poolscreen: adaptive pooled-testing plans for diagnostic screening.

Plan generation (generalized binary splitting, multi-stage, nested),
pooling-dilution limits, replication statistics, a seeded simulator, and a
resumable session engine with a CLI and HTTP service on top.
"""

from .backend import KERNEL_BACKEND
from .errors import (ConfigError, DomainError, PoolscreenError, ProtocolError,
                     SessionLoadError)
from .testmodel import (DEFAULT_KIT, PriorEstimate, ReplicationPolicy,
                        TestKitProfile, estimate_prior, majority_decide,
                        posterior_negative_odds, profile_from_points,
                        replicated_fnr, replicated_fpr, sensitivity_at_load)
from .dilution import (DilutionQuery, POOLING_FRACTION_LIMIT, PoolSize,
                       PortionCount, dilution_report, lambert_w0,
                       max_pool_size, max_pool_size_log_rule, max_portions,
                       pooled_sensitivity, pooling_beneficial, required_load)
from .planners import (CostTable, GbsPlanner, GroupOutcome, GroupQuery,
                       MstPlanner, NestedPlanner, Planner, build_cost_table,
                       create_planner, expected_tests, gbs_worst_case_bound,
                       inherent_replication_savings, mst_worst_case_bound,
                       optimal_stage_count, planner_from_doc)

__version__ = "0.1.0"

"""Design-space exploration for transformer inference on chiplet
platforms: workload modeling, traffic generation, interposer-network
topology search, and deterministic network simulation."""

from .noi import (Design, HopHistogram, LinkStats, ValidationResult,
                  design_to_dot, hop_histogram, utilization, validate)
from .optimize import (Objectives, ParetoArchive, SearchSpace, dominates,
                       local_search, neighbors, phv, select_final,
                       stage_explore)
from .platform import (Platform, Placement, SystemConfig, build_platform,
                       mesh_design, place_initial)
from .sfc import hilbert_order, morton_order, sfc_order
from .sim import CostModel, SimReport, compare, edp, simulate
from .traffic import (Flow, KernelMapping, TrafficPhase, TrafficTrace,
                      default_mapping, generate_trace)
from .workload import (MODEL_PRESETS, KernelInstance, ModelSpec,
                       SequenceConfig, WriteEstimate, fc_dominance,
                       intermediate_storage_ratio, kernel_sequence,
                       load_catalog, reram_write_load, resolve_model)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

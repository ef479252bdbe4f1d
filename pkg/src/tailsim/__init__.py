"""Discrete-event simulator and experiment toolkit for characterizing
latency-critical server workloads: open-loop load generation with
timeliness accounting, tail-latency analysis across SMT thread placements,
behavior under LLC-way and memory-bandwidth constraints, and a
resource-signature workload taxonomy."""

from .model import (ClosedLoop, ModelError, OpenLoop, PlatformConfig,
                    ResourceLimits, ScenarioConfig, ServiceDist, Topology,
                    WorkDemand, WorkloadProfile, list_shipped_profiles,
                    load_profile, mean_demands, miss_ratio, request_demands,
                    save_profile, shipped_profile, validate_profile)
from .loadgen import (ArrivalModel, ArrivalSchedule, ClientAssignment,
                      assign_clients, build_schedule, export_schedule,
                      import_schedule)
from .engine import (ActivePhase, RequestRecord, Trace, export_series_csv,
                     export_trace_csv, recompute_drain_rates,
                     simulate_closed_loop, simulate_open_loop)
from .metrics import (MetricsSummary, default_warmup, percentile, summarize,
                      timely_ratio)

__version__ = "0.1.0"

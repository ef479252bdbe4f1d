import math

import numpy as np
import pytest

from tailsim.engine import simulate_closed_loop, simulate_open_loop
from tailsim.loadgen import ArrivalModel, assign_clients, build_schedule
from tailsim.metrics import (MetricsError, default_warmup, percentile,
                             summarize, summary_csv_row, timely_ratio,
                             SWEEP_CSV_COLUMNS)
from tailsim.model import (ClosedLoop, OpenLoop, PlatformConfig,
                           ResourceLimits, ScenarioConfig, ServiceDist,
                           Topology, WorkloadProfile)

PLATFORM = PlatformConfig()
FREE = ResourceLimits.unconstrained(PLATFORM)


def run(profile, scenario, arrival=None, seed=11, limits=FREE):
    arrival = arrival or ArrivalModel("poisson")
    sched = build_schedule(arrival, scenario.mode.qps, scenario.duration, 7)
    asg = assign_clients(sched, scenario.n_clients)
    return simulate_open_loop(profile, scenario, limits, PLATFORM, sched,
                              asg, seed)


class TestPercentile:
    def test_uniform_grid_nearest_rank(self):
        values = list(range(1, 101))
        assert percentile(values, 95) == 95
        assert percentile(values, 50) == 50
        assert percentile(values, 99) == 99
        assert percentile(values, 100) == 100

    def test_single_value(self):
        for p in (1, 50, 95, 99.9, 100):
            assert percentile([42.0], p) == 42.0

    def test_returns_member_of_input(self):
        rng = np.random.default_rng(3)
        xs = rng.lognormal(0, 1.5, 997)
        for p in (50, 95, 99):
            assert percentile(xs, p) in xs

    def test_exponential_closed_form(self):
        # sojourn of M/M/1 is Exp(mu - lambda); p95 = ln(20)/(mu - lambda)
        rng = np.random.default_rng(5)
        xs = rng.exponential(1.0 / 500.0, 200_000)
        assert percentile(xs, 95) == pytest.approx(math.log(20) / 500,
                                                   rel=0.05)

    def test_errors(self):
        with pytest.raises(MetricsError):
            percentile([], 95)
        with pytest.raises(MetricsError):
            percentile([1.0], 0)
        with pytest.raises(MetricsError):
            percentile([1.0], 101)

    def test_ordering_property(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            xs = rng.lognormal(0, rng.uniform(0.1, 2.0),
                               rng.integers(1, 500))
            p50 = percentile(xs, 50)
            p95 = percentile(xs, 95)
            p99 = percentile(xs, 99)
            assert p50 <= p95 <= p99


class TestSummarize:
    def test_mm1_utilization(self):
        prof = WorkloadProfile(name="exp", cpu_work=0.001,
                               service_dist=ServiceDist("exponential"))
        scen = ScenarioConfig(Topology.ONE_ST, 200, OpenLoop(500.0), 60.0,
                              rtt=0.0)
        s = summarize(run(prof, scen), warmup=6.0)
        assert s.cpu_utilization == pytest.approx(0.50, abs=0.02)

    def test_disk_only_profile_zero_utilization(self):
        prof = WorkloadProfile(name="disk", disk_bytes=200000.0)
        scen = ScenarioConfig(Topology.ONE_ST, 40, OpenLoop(300.0), 10.0)
        s = summarize(run(prof, scen), warmup=1.0)
        assert s.cpu_utilization < 0.01

    def test_llc_occupancy_is_capped_footprint(self):
        prof = WorkloadProfile(name="m", cpu_work=0.001, footprint=10.0)
        scen = ScenarioConfig(Topology.ONE_ST, 10, OpenLoop(100.0), 5.0)
        s = summarize(run(prof, scen), warmup=0.5)
        assert s.llc_occupancy == 10.0
        s2 = summarize(run(prof, scen, limits=ResourceLimits(llc_ways=2)),
                       warmup=0.5)
        assert s2.llc_occupancy == pytest.approx(3.0)  # 2 ways x 1.5 MB

    def test_shipped_img_dnn_occupancy_in_observed_band(self):
        from tailsim.model import shipped_profile
        prof = shipped_profile("img-dnn")
        assert 6.0 <= min(prof.footprint, PLATFORM.llc_capacity) <= 12.0

    def test_purity(self):
        prof = WorkloadProfile(name="p", cpu_work=0.002,
                               service_dist=ServiceDist("lognormal", 1.0))
        scen = ScenarioConfig(Topology.ONE_ST, 10, OpenLoop(200.0), 8.0)
        tr = run(prof, scen)
        assert summarize(tr, warmup=1.0) == summarize(tr, warmup=1.0)

    def test_deterministic_one_st_service_time_exact(self):
        prof = WorkloadProfile(name="det", cpu_work=0.0015,
                               disk_bytes=110000.0)
        scen = ScenarioConfig(Topology.ONE_ST, 30, OpenLoop(100.0), 10.0)
        s = summarize(run(prof, scen), warmup=1.0)
        expected = 0.0015 + 110000.0 / (550e6)
        assert s.mean_service_time == pytest.approx(expected, rel=1e-9)

    def test_bandwidth_matches_series(self):
        prof = WorkloadProfile(name="m", cpu_work=0.0005,
                               mem_accesses=100000, miss_min=0.3,
                               miss_max=0.3, net_tx_bytes=5000.0)
        scen = ScenarioConfig(Topology.ONE_ST, 20, OpenLoop(400.0), 10.0)
        tr = run(prof, scen)
        s = summarize(tr, warmup=2.0)
        # per-request mem traffic: 100000 x 0.3 x 64 B at 400 QPS
        assert s.mem_bw == pytest.approx(100000 * 0.3 * 64 * 400 / 1e6,
                                         rel=0.05)
        assert s.net_tx_bw == pytest.approx(5000 * 400 / 1e6, rel=0.05)

    def test_warmup_validation(self):
        prof = WorkloadProfile(name="p", cpu_work=0.001)
        scen = ScenarioConfig(Topology.ONE_ST, 5, OpenLoop(100.0), 5.0)
        tr = run(prof, scen)
        with pytest.raises(MetricsError):
            summarize(tr, warmup=5.0)
        with pytest.raises(MetricsError):
            summarize(tr, warmup=4.999)  # no request scheduled in window

    def test_default_warmup_rule(self):
        assert default_warmup(100.0) == 10.0
        assert default_warmup(600.0) == 60.0
        assert default_warmup(20.0) == 5.0
        assert default_warmup(3.0) < 3.0


class TestTimelyRatio:
    def test_enough_clients_is_fully_timely(self):
        prof = WorkloadProfile(name="p", cpu_work=0.001,
                               service_dist=ServiceDist("exponential"))
        scen = ScenarioConfig(Topology.ONE_ST, 500, OpenLoop(400.0), 20.0)
        tr = run(prof, scen)
        assert timely_ratio(tr) == 1.0

    def test_single_client_overload_exact_hand_oracle(self):
        # 1 client, deterministic 2 ms service, deterministic 1 ms gaps:
        # only the first request is issued on time, every later one waits
        # on the client; ratio is exactly 1/1000.
        prof = WorkloadProfile(name="slow", cpu_work=0.002)
        scen = ScenarioConfig(Topology.ONE_ST, 1, OpenLoop(1000.0), 1.0,
                              rtt=0.0)
        sched = build_schedule(ArrivalModel("deterministic"), 1000.0, 1.0, 0)
        assert len(sched) == 1000
        tr = simulate_open_loop(prof, scen, FREE, PLATFORM, sched,
                                assign_clients(sched, 1), 3)
        assert timely_ratio(tr) == 1.0 / 1000.0

    def test_closed_loop_ratio_is_one(self):
        prof = WorkloadProfile(name="c", cpu_work=0.01)
        scen = ScenarioConfig(Topology.ONE_ST, 2, ClosedLoop(2, 0.05), 2.0)
        tr = simulate_closed_loop(prof, scen, FREE, PLATFORM, 1)
        assert timely_ratio(tr) == 1.0


class TestCsvRow:
    def test_stable_columns(self):
        assert SWEEP_CSV_COLUMNS == (
            "qps", "p50", "p95", "p99", "util", "mem_bw", "disk_bw",
            "net_tx", "net_rx", "llc_occ", "timely_ratio", "saturated")

    def test_row_formatting(self):
        prof = WorkloadProfile(name="p", cpu_work=0.001)
        scen = ScenarioConfig(Topology.ONE_ST, 5, OpenLoop(100.0), 5.0)
        s = summarize(run(prof, scen), warmup=0.5)
        row = summary_csv_row(100.0, s)
        assert len(row.split(",")) == len(SWEEP_CSV_COLUMNS)
        assert row.split(",")[-1] in ("0", "1")

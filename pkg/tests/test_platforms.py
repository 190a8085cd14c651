import json

import pytest

from hetprice import LocalCpu, Simulated, ValidationError, execute, load_registry, load_table1
from hetprice.mcengine import run_chunks

from conftest import bs_european, heston_flat

# published speedups (Heston column, Black-Scholes Asian column)
TABLE1 = {
    "xilinx_7z045": (9.53, 9.77),
    "altera_stratix_v_gxa7": (274.87, 194.85),
    "xilinx_virtex6_sx475t": (223.93, 353.59),
    "amd_opteron_6272": (28.99, 25.36),
    "amd_firepro_w5000": (58.40, 85.67),
    "intel_xeon_phi_3120p": (156.42, 421.63),
}


class TestSimulated:
    def test_virtual_latency_formula(self, bs_task):
        p = Simulated("fpga", rate=1e6, setup_s=0.5)
        assert execute(p, bs_task, 10**6).elapsed_s == 1.5

    def test_never_reads_wall_clock(self, bs_task, monkeypatch):
        import time

        def boom():
            raise AssertionError("wall clock read")

        monkeypatch.setattr(time, "perf_counter", boom)
        monkeypatch.setattr(time, "time", boom)
        monkeypatch.setattr(time, "monotonic", boom)
        assert Simulated("fpga", rate=1e6).execute(bs_task, 100).elapsed_s == 1e-4

    def test_published_ratio(self, bs_task):
        fast = Simulated("stratix", rate=274.87e5)
        slow = Simulated("opteron", rate=28.99e5)
        ratio = execute(fast, bs_task, 10**7).elapsed_s / execute(slow, bs_task, 10**7).elapsed_s
        assert ratio == pytest.approx(28.99 / 274.87, rel=1e-9)

    def test_overrides_by_id_then_family(self):
        task = heston_flat(task_id="h1")
        p = Simulated("x", rate=1.0, rate_overrides={"heston": 2.0})
        assert p.rate_for(task) == 2.0
        p = Simulated("x", rate=1.0, rate_overrides={"heston": 2.0, "h1": 3.0})
        assert p.rate_for(task) == 3.0
        assert p.rate_for(bs_european()) == 1.0


class TestPlatformInvariance:
    @pytest.mark.parametrize("first_chunk", [0, 17])
    def test_local_and_simulated_bit_identical(self, first_chunk):
        task = heston_flat(xi=0.3, steps=8)
        local = LocalCpu("cpu", workers=3, chunk_size=1000)
        sim = Simulated("sim", rate=1e6, chunk_size=1000)
        a = execute(local, task, 5500, first_chunk)
        b = execute(sim, task, 5500, first_chunk)
        assert a.moments() == b.moments()
        assert a.moments() == run_chunks(task, 5500, first_chunk, 1000).moments()

    def test_local_reports_wall_time(self, bs_task):
        r = LocalCpu("cpu").execute(bs_task, 20_000)
        assert r.elapsed_s > 0


class TestRegistry:
    def test_table1_profiles(self):
        registry = load_table1()
        assert len(registry) == 6
        for p in registry:
            heston, bs = TABLE1[p.name]
            assert p.rate_for(heston_flat()) == pytest.approx(heston * 1e5, rel=1e-12)
            assert p.rate_for(bs_european()) == pytest.approx(bs * 1e5, rel=1e-12)
            assert p.setup_s == 0

    def test_table1_ratio(self):
        registry = load_table1()
        task = heston_flat()
        stratix = registry["altera_stratix_v_gxa7"].virtual_latency(task, 10**7)
        opteron = registry["amd_opteron_6272"].virtual_latency(task, 10**7)
        assert opteron / stratix == pytest.approx(274.87 / 28.99, rel=1e-9)

    def test_round_trip(self):
        registry = load_table1()
        assert load_registry(registry.to_json()).to_json() == registry.to_json()

    @pytest.mark.parametrize(
        "platform, field",
        [
            ({"name": "a", "type": "simulated", "rate": 0}, "rate"),
            ({"name": "a", "type": "simulated", "rate": -1}, "rate"),
            ({"name": "a", "type": "simulated", "rate": 1, "setup_s": -1}, "setup_s"),
            ({"name": "a", "type": "simulated"}, "rate"),
            ({"name": "a", "type": "quantum"}, "type"),
            ({"name": "a", "type": "local_cpu", "workers": 0}, "workers"),
        ],
    )
    def test_invalid_platform(self, platform, field):
        with pytest.raises(ValidationError) as info:
            load_registry(json.dumps({"platforms": [platform]}))
        assert info.value.field == field

    def test_duplicate_name(self):
        doc = {"platforms": [{"name": "a", "type": "local_cpu"}] * 2}
        with pytest.raises(ValidationError, match="duplicate name"):
            load_registry(json.dumps(doc))

    def test_syntax_error(self):
        with pytest.raises(ValidationError, match="syntax"):
            load_registry("{")

    def test_lookup(self):
        registry = load_table1()
        assert registry[1] is registry["altera_stratix_v_gxa7"]
        with pytest.raises(KeyError):
            registry["missing"]

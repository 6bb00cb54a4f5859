import json

import pytest

from sidechan import sim
from sidechan.errors import ConfigError

MINIMAL = """
[scenario]
name = "mini"
seed = 3
scrypt_n = 1024

[[vehicle]]
plate = "AA-1"
salt = 1

[[vehicle]]
plate = "BB-2"
salt = 0x2
role = "follow"

[channels]
mode = "ideal"
"""


def test_bundled_scenarios_present():
    assert set(sim.ATTACK_SCENARIOS) <= set(sim.bundled_scenarios())


def test_parse_minimal():
    sc = sim.parse_scenario(MINIMAL)
    assert sc.name == "mini" and sc.vehicles[1].role == "follow"
    assert sc.expect == ("Confirmed",) and sc.channels.mode == "ideal"


@pytest.mark.parametrize("bad,line", [
    (MINIMAL.replace('role = "follow"', 'role = "side"'), 14),
    (MINIMAL.replace("salt = 0x2", "salt = 0x1ffffffff"), 13),
    (MINIMAL.replace('mode = "ideal"', 'mode = "ideal"\nwobble = 1'), 18),
    (MINIMAL + "\n[faults]\nflip = [{ channel = \"radio\", sender = \"AA-1\", bits = [1] }]\n", 20),
])
def test_parse_errors_name_the_line(bad, line):
    with pytest.raises(ConfigError) as exc:
        sim.parse_scenario(bad, "x.toml")
    assert f"x.toml:{line}" in str(exc.value)


def test_missing_table_keys():
    with pytest.raises(ConfigError):
        sim.parse_scenario("[scenario]\nname='x'\n")
    with pytest.raises(ConfigError):
        sim.parse_scenario("not toml [")
    with pytest.raises(ConfigError):
        sim.load_scenario("no-such-scenario")


def test_ideal_run_and_trace_file(tmp_path):
    sc = sim.parse_scenario(MINIMAL)
    res = sim.run_scenario(sc, trace_path=tmp_path / "t.jsonl")
    assert res.outcome == "Confirmed" and res.passed and res.exit_code == 0
    assert res.summary["keys_agree"] is True
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    events = [json.loads(x) for x in lines]
    assert events[0]["kind"] == "start" and events[-1]["kind"] == "end"
    ts = [e["t"] for e in events]
    assert ts == sorted(ts)


def test_trace_refuses_time_travel():
    tr = sim.Trace()
    tr(1.0, "x", "a", {})
    with pytest.raises(RuntimeError):
        tr(0.5, "x", "b", {})


@pytest.mark.parametrize("name", sim.ATTACK_SCENARIOS)
def test_attack_scenarios_meet_expectations(name):
    res = sim.run_scenario(name)
    assert res.passed, (res.outcome, res.scenario.expect)


def test_honest_physical_summary():
    res = sim.run_scenario("honest")
    ch = res.summary["channels"]
    assert set(ch["acoustic"]["bits_per_direction"].values()) == {160}
    assert set(ch["visual"]["bits_per_direction"].values()) == {16}
    assert ch["acoustic"]["ber"] == 0 and ch["visual"]["ber"] == 0


def test_ber_table_shape():
    rows = sim.measure_ber(payloads=2, n_bits=24, pixel_noise=(0,), transducers=((0, 0.5),))
    assert [r["channel"] for r in rows] == ["acoustic", "visual"]
    assert all(r["ber"] == 0 for r in rows)
    text = sim.rows_to_csv(rows, sim.BER_HEADER)
    assert text.splitlines()[0] == ",".join(sim.BER_HEADER)

import copy
import csv
import io
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from llmcomm.cli import main, parse_sweep
from llmcomm.scenario import (
    DisconnectedTopologyConfigError,
    InvalidProbabilityError,
    ScenarioError,
    UnknownKeyError,
    load_packaged,
    packaged_path,
    parse_scenario,
    set_dotted,
)
from randscen import random_raw

GOLDEN = Path(__file__).parent / "golden" / "routes.csv"


def three_users_raw():
    return json.loads(packaged_path("three_users").read_text())


def write(tmp_path, raw, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def test_packaged_scenarios_parse():
    sc = load_packaged("three_users")
    assert set(sc.users) == {"A", "B", "C"}
    assert sc.users["C"].status.variant.value == "Away"
    load_packaged("breakeven")


def test_unknown_key():
    raw = three_users_raw()
    raw["users"][0]["colour"] = "blue"
    with pytest.raises(UnknownKeyError) as exc:
        parse_scenario(raw)
    assert exc.value.key == "users[0].colour"


def test_bad_probabilities_name_the_flow(tmp_path, capsys):
    raw = three_users_raw()
    raw["flows"][0]["topics"] = {"lunch": 0.6, "project": 0.3}
    with pytest.raises(InvalidProbabilityError, match="A->C"):
        parse_scenario(raw)
    assert main(["run", "--scenario", write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "invalid-probability" in err and "flows[0]" in err and "A->C" in err
    assert not (tmp_path / "o" / "trace.jsonl").exists()


def test_disconnected_topology():
    raw = three_users_raw()
    raw["topology"]["nodes"].append({"id": "island", "kind": "edge"})
    with pytest.raises(DisconnectedTopologyConfigError):
        parse_scenario(raw)


def test_device_ids_and_home():
    raw = three_users_raw()
    raw["users"][0]["home"] = "edge1"
    with pytest.raises(ScenarioError, match="not a datacenter"):
        parse_scenario(raw)


def test_set_dotted():
    raw = three_users_raw()
    out = set_dotted(raw, "flows.0.count", 5)
    assert out["flows"][0]["count"] == 5 and "count" not in raw["flows"][0]
    with pytest.raises(ScenarioError):
        set_dotted(raw, "flows.9.count", 5)


def test_baseline_is_all_active():
    base = load_packaged("three_users").baseline()
    assert all(u.status.variant.value == "Active" for u in base.users.values())
    assert all(sc.status.variant.value == "Active" for u in base.users.values() for sc in u.schedule)
    assert all(u.drain_policy == "always-human" for u in base.users.values())


def test_run_writes_four_files(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", "three_users", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["baseline_report.json", "reduction_report.json", "report.json", "trace.jsonl"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["messages_sent"] > 0


def test_run_csv_and_logs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", "three_users", "--out", str(out), "--format", "csv", "--write-logs"]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "report.csv").read_text())))
    assert len(rows) == 1 and int(rows[0]["llm_served"]) > 0
    logs = (out / "interactions.jsonl").read_text().splitlines()
    assert len(logs) == int(rows[0]["log_records"])
    assert json.loads((out / "registry.json").read_text())["C"]["version"] >= 2


def test_run_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--scenario", "three_users", "--seed", "99", "--out", str(tmp_path / d)]) == 0
    for name in ("trace.jsonl", "report.json", "baseline_report.json", "reduction_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_scenario_file(tmp_path, capsys):
    assert main(["validate", "--scenario", str(tmp_path / "nope.json")]) == 2


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["validate", "--scenario", str(p)]) == 2


def mutate(raw, rng):
    raw = copy.deepcopy(raw)
    choice = rng.randrange(6)
    if choice == 0:
        raw[rng.choice(["extra", "seeds"])] = 1
    elif choice == 1:
        del raw[rng.choice(["seed", "flows", "topology"])]
    elif choice == 2:
        raw["flows"][0]["topics"] = {"t0": rng.choice([0.5, 1.0, 1.2])}
    elif choice == 3:
        raw["users"][0]["status"] = rng.choice(["Active", "Sleeping", {"variant": "Busy", "allowlist": ["u1"]}])
    elif choice == 4:
        raw["duration_s"] = rng.choice([-1, 0, 5, "ten"])
    else:
        raw["topology"]["links"] = raw["topology"]["links"][: rng.randrange(len(raw["topology"]["links"]) + 1)]
    return raw


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_validate_agrees_with_run(tmp_path_factory, seed):
    rng = random.Random(seed)
    raw = mutate(random_raw(seed), rng)
    tmp = tmp_path_factory.mktemp("v")
    path = write(tmp, raw)
    v = main(["validate", "--scenario", path])
    r = main(["run", "--scenario", path, "--out", str(tmp / "o")])
    assert v == r and v in (0, 2)


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", "breakeven", "--out", str(out),
                 "--sweep", "flows.0.count=10,20", "--jobs", "2"]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))
    assert [r["value"] for r in rows] == ["10", "20"]
    assert [int(r["messages_sent"]) for r in rows] == [10, 20]
    assert (out / "flows.0.count=10" / "trace.jsonl").exists()
    assert int(rows[1]["baseline_core_bytes"]) == 2 * int(rows[0]["baseline_core_bytes"])


def test_sweep_bad_value_fails_before_running(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", "three_users", "--out", str(out), "--sweep", "duration_s=100,-5"]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_parse_sweep():
    assert parse_sweep("a.b=1,x,2.5") == ("a.b", (1, "x", 2.5))


@pytest.mark.parametrize("gpu_hours,kwh,tco2", [("184320", 73728, 31.22), ("1720320", 688128, 291.42)])
def test_cost_command(capsys, gpu_hours, kwh, tco2):
    assert main(["cost", "--gpu-hours", gpu_hours]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kwh"] == kwh and out["usd"] == float(gpu_hours)
    assert out["tco2eq"] == pytest.approx(tco2, rel=0.005)


def test_cost_pretrained_and_zero(capsys):
    assert main(["cost", "--gpu-hours", "184320", "--from-pretrained"]) == 0
    assert json.loads(capsys.readouterr().out)["gpu_hours"] == pytest.approx(1843.2)
    assert main(["cost", "--gpu-hours", "0"]) == 2


def test_routes_command(capsys):
    assert main(["routes", "--table"]) == 0
    assert capsys.readouterr().out == GOLDEN.read_text()

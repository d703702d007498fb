import csv

import pytest

from srp_diot.cli import ablate, main, parse_sweep, summary_table
from srp_diot.errors import ConfigError
from srp_diot.ontology import read_ontology_file
from srp_diot.simnet import SimConfig

RUN_INI = "[sim]\nnodes = 40\nontology_leaves = 40\nduration = 60\nmobility_mix = 50, 25, 25\n"


def write(path, text):
    path.write_text(text)
    return str(path)


def test_gen_ontology(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["gen-ontology", "--leaves", "268", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen-ontology", "--leaves", "268", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    leaves = len(read_ontology_file(a).leaves())
    assert abs(leaves - 268) <= 0.15 * 268
    assert "leaves" in capsys.readouterr().out


def test_gen_ontology_needs_leaves(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-ontology", "--seed", "3"])
    assert exc.value.code == 2
    assert "--leaves" in capsys.readouterr().err


def test_run_writes_csv(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", RUN_INI)
    out = tmp_path / "r.csv"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["protocol"] == "srp" and rows[0]["nodes"] == "40"
    assert "success" in capsys.readouterr().out


def test_run_to_stdout_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", RUN_INI)
    main(["run", "--config", cfg])
    first = capsys.readouterr().out
    main(["run", "--config", cfg])
    assert capsys.readouterr().out == first
    assert first.startswith("protocol,seed,nodes")


def test_dry_run_prints_resolved_config(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", RUN_INI)
    assert main(["run", "--config", cfg, "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "nodes = 40" in out and "rf_budget = 10" in out and "use_stability = true" in out


@pytest.mark.parametrize(
    "text", ["[protocol]\nname = aodv\n", "[sim]\nwhatever = 1\n"]
)
def test_bad_config_is_usage_error(tmp_path, capsys, text):
    cfg = write(tmp_path / "c.ini", text)
    assert main(["run", "--config", cfg]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_missing_config_file_is_usage_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.ini")]) == 2


def test_runtime_failure_exits_one(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", f"[sim]\nnodes = 5\nontology_file = {tmp_path / 'none.txt'}\n")
    assert main(["run", "--config", cfg]) == 1


SWEEP = """
[sweep]
axis = node_count
values = 20 30 40
seeds = 1 2 3
protocols = srp gsd flooding centralized chord

[sim]
ontology_leaves = 30
duration = 30
drain = 60
"""


def test_compare_cardinality_and_report(tmp_path, capsys):
    sweep = write(tmp_path / "s.ini", SWEEP)
    out = tmp_path / "out"
    assert main(["compare", "--sweep", sweep, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert len(rows) == 45
    assert [r["nodes"] for r in rows[:15]] == ["20"] * 15
    report = (out / "summary.txt").read_text()
    assert report == capsys.readouterr().out
    # one flag per column in each traffic table
    for block in report.split("\n\n")[:2]:
        lines = block.splitlines()[2:]
        assert sum(line.count("*") for line in lines) == 3


def test_compare_parallel_matches_serial(tmp_path):
    text = SWEEP.replace("values = 20 30 40", "values = 20 30").replace("seeds = 1 2 3", "seeds = 1")
    sweep = write(tmp_path / "s.ini", text)
    main(["compare", "--sweep", sweep, "--out", str(tmp_path / "a")])
    main(["compare", "--sweep", sweep, "--out", str(tmp_path / "b"), "--jobs", "2"])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_parse_sweep_axes():
    spec = parse_sweep("[sweep]\naxis = mobility_mix\nvalues = 100,0,0 20,50,30\nseeds = 4\n[sim]\nnodes = 9\n")
    assert spec.values == ((100, 0, 0), (20, 50, 30)) and spec.seeds == (4,)
    cells = spec.cells()
    assert len(cells) == 2 * len(spec.protocols)
    assert {c.nodes for c in cells} == {9} and cells[-1].mobility_mix == (20, 50, 30)
    qa = parse_sweep("[sweep]\naxis = QA_pair\nvalues = 30,120 1,300\nprotocols = srp\n")
    assert [(c.q_interval, c.a_interval) for c in qa.cells()] == [(30, 120), (1, 300)]
    rtb = parse_sweep("[sweep]\naxis = rtb_bytes\nvalues = 512 4096\nprotocols = srp dsdv\n")
    assert [c.rtb_bytes for c in rtb.cells()] == [512, 512, 4096, 4096]


@pytest.mark.parametrize(
    "text",
    [
        "[sim]\nnodes = 3\n",
        "[sweep]\naxis = speed\nvalues = 1\n",
        "[sweep]\naxis = node_count\nvalues =\n",
        "[sweep]\naxis = QA_pair\nvalues = 30\n",
        "[sweep]\naxis = node_count\nvalues = 10\nprotocols = aodv\n",
        "[sweep]\naxis = node_count\nvalues = 10\ncolour = red\n",
    ],
)
def test_bad_sweeps(text):
    with pytest.raises(ConfigError):
        parse_sweep(text)


def test_ablation_switches():
    base = SimConfig()
    assert ablate(base, False, False) == base
    u = ablate(base, True, True).utility
    assert not u.use_stability and not u.use_coverage
    assert ablate(base, True, False).utility.use_coverage


def test_summary_marks_cheapest():
    spec = parse_sweep("[sweep]\naxis = rtb_bytes\nvalues = 1 2\nprotocols = srp dsdv\n")
    cells = spec.cells()
    rows = [
        {"total_bytes": t, "query_bytes": q, "avg_query_hops": "1.0", "success_rate": "1.0"}
        for t, q in ((10, 5), (20, 1), (30, 7), (5, 9))
    ]
    text = summary_table(spec, cells, rows)
    total = text.split("\n\n")[0].splitlines()
    assert total[2].split() == ["srp", "10*", "30"]
    assert total[3].split() == ["dsdv", "20", "5*"]
    query = text.split("\n\n")[1].splitlines()
    assert query[2].split() == ["srp", "5", "7*"]

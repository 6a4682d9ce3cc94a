import json
from pathlib import Path

import pytest

from ccqm.cli import build_parser, main
from ccqm.constants import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK
from ccqm.graphs import FareyGraph, Slope

CONFIGS = Path(__file__).parent.parent / "configs"

TREE_EXPERIMENT = """
model = tree
schedule = 8
basepoint = 1
omega = R^-1, 1, R
disk_generators = {disk}
disk_basepoint = 1
disk_cap = 3
boundary = {boundary}
"""


def records(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line]


def write_experiment(tmp_path, text: str) -> str:
    path = tmp_path / "experiment.cfg"
    path.write_text(text)
    return str(path)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.startswith("ccqm ")


def test_dist(capsys):
    argv = ["--model", "farey", "--n-schedule", "2,8,16,32"]
    status = main(argv + ["dist", "0/1", "5/7"])
    assert status == EXIT_OK
    out, err = capsys.readouterr()
    (record,) = records(out)
    assert record["kind"] == "dist"
    assert record["model"] == "farey"
    assert record["n_star"] == 8
    assert record["value"] == FareyGraph(32).distance(Slope(0, 1), Slope(5, 7))
    assert record["evaluated"][0] == [2, None]
    assert "N*" in err


def test_dist_is_deterministic(capsys):
    argv = ["--n-schedule", "4,8,16", "dist", "1/0", "3/4"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_dist_bad_vertex(capsys):
    assert main(["dist", "0/0", "1/1"]) == EXIT_ERROR
    assert "ccqm: error:" in capsys.readouterr().err


def test_dist_single_schedule_point(capsys):
    assert main(["--n-schedule", "8", "dist", "0/1", "1/1"]) == EXIT_INCONCLUSIVE
    (record,) = records(capsys.readouterr().out)
    assert record["stabilized"] is False
    assert record["value"] == 1


def test_missing_config(capsys, tmp_path):
    assert main(["defect", str(tmp_path / "missing.cfg")]) == EXIT_ERROR


def test_qm(capsys):
    assert main(["qm", "R", str(CONFIGS / "omega.cfg")]) == EXIT_OK
    (record,) = records(capsys.readouterr().out)
    assert record["kind"] == "qm"
    assert record["word"] == "R"
    assert record["value"] == 0
    assert record["omega"] == ["-1/1", "0/1", "1/1"]


def test_out_and_cache_files(capsys, tmp_path):
    out, cache = tmp_path / "records.jsonl", tmp_path / "distances.txt"
    argv = ["--n-schedule", "2,8,16", "--out", str(out), "--cache", str(cache)]
    assert main(argv + ["dist", "0/1", "5/7"]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert records(out.read_text())[0]["kind"] == "dist"
    lines = cache.read_text().splitlines()
    assert [line.split(",")[:4] for line in lines] == [
        ["farey", "8", "0/1", "5/7"],
        ["farey", "16", "0/1", "5/7"],
    ]
    # A second run reads the cache and reproduces the record.
    assert main(argv + ["dist", "0/1", "5/7"]) == EXIT_OK
    assert records(out.read_text())[0]["n_star"] == 8


def test_tree_avoidance_audit(capsys, tmp_path):
    config = write_experiment(tmp_path, TREE_EXPERIMENT.format(disk="L", boundary=0))
    assert main(["audit", "avoidance", config]) == EXIT_OK
    (record,) = records(capsys.readouterr().out)
    assert record["audit"] == "avoidance"
    assert record["statistic"] == 1
    assert record["passed"] is True


def test_tree_avoidance_audit_fails_wide_boundary(capsys, tmp_path):
    config = write_experiment(tmp_path, TREE_EXPERIMENT.format(disk="L", boundary=1))
    assert main(["audit", "avoidance", config]) == EXIT_INCONCLUSIVE
    found = records(capsys.readouterr().out)
    assert [r["parameters"]["boundary"] for r in found] == [0, 1]
    assert [r["statistic"] for r in found] == [1, 3]
    assert [r["passed"] for r in found] == [True, False]


def test_tree_conecheck(capsys, tmp_path):
    config = write_experiment(
        tmp_path,
        TREE_EXPERIMENT.format(disk="R", boundary=0) + "omega_words = L^2\n",
    )
    assert main(["conecheck", config]) == EXIT_OK
    found = {r["kind"]: r for r in records(capsys.readouterr().out)}
    assert found["cone"]["base_distance"] == 2
    assert found["cone"]["coned_distance"] <= 2
    composite = found["composite"]
    assert composite["phi"] == "L^2 R^2 L^-2 R^2"
    assert composite["element"] == "hyperbolic"
    assert composite["c"] == 0
    assert composite["lam_at_zero"] == "1/1"
    assert found["conecheck"]["misprojected"] == []
    assert found["conecheck"]["contracted"] is True


TWIST_EXPERIMENT = """
model = tree
schedule = 32
basepoint = 1
omega = R^-1, 1, R
word = R
disk_generators = R
stabilizer = 1
samples = 10
sample_length = 3
subgroup_length = 4
cyclic_max = 8
growth_max_power = 8
"""

FAMILY_EXPERIMENT = """
model = tree
schedule = 256
phi = R
psi = L
family = {family}
basepoint = 1
samples = 20
sample_length = 8
growth_max_power = {power}
"""

FAREY_EXPERIMENT = """
model = farey
schedule = 16, 32
basepoint = 0/1
stabilizer = L
omega_words = R L
halfwidth = 1
samples = 10
sample_length = 2
growth_max_power = 2
subgroup_length = 4
coset_samples = 20
coset_length = 3
"""


def run(capsys, argv) -> tuple[int, str]:
    status = main(argv)
    return status, capsys.readouterr().out


def test_defect(capsys, tmp_path):
    config = write_experiment(tmp_path, TWIST_EXPERIMENT)
    status, out = run(capsys, ["defect", config])
    assert status == EXIT_OK
    (record,) = records(out)
    assert record["kind"] == "defect"
    assert record["value"] == 1
    assert record["n_star"] == 32
    assert record["stabilized"] is True


def test_defect_in_parallel(capsys, tmp_path):
    config = write_experiment(tmp_path, TWIST_EXPERIMENT)
    serial = run(capsys, ["defect", config])
    assert run(capsys, ["--jobs", "2", "defect", config]) == serial


def test_homogenize(capsys, tmp_path):
    config = write_experiment(tmp_path, TWIST_EXPERIMENT)
    status, out = run(capsys, ["homogenize", "R", config])
    assert status == EXIT_OK
    (record,) = records(out)
    assert record["value"] == "1/2"
    assert record["error"] == "1/8"
    assert record["power"] == 8
    assert record["partial"] is False


def test_cyclic_audit(capsys, tmp_path):
    config = write_experiment(tmp_path, TWIST_EXPERIMENT)
    status, out = run(capsys, ["audit", "cyclic", config])
    assert status == EXIT_OK
    (record,) = records(out)
    assert record["diagonal"] is True
    assert record["passed"] is False
    assert record["statistic"] == 4


def test_handlebody_audit(capsys, tmp_path):
    config = write_experiment(tmp_path, TWIST_EXPERIMENT)
    status, out = run(capsys, ["audit", "handlebody", config])
    assert status == EXIT_INCONCLUSIVE
    (record,) = records(out)
    assert record["audit"] == "handlebody"
    assert record["statistic"] == 2


def test_stabilizer_must_fix_basepoint(capsys, tmp_path):
    text = TWIST_EXPERIMENT.replace("stabilizer = 1", "stabilizer = L")
    config = write_experiment(tmp_path, text)
    assert main(["audit", "stabilizer", config]) == EXIT_ERROR
    assert "move the basepoint" in capsys.readouterr().err


def test_stabilizer_audit_farey(capsys):
    config = str(CONFIGS / "farey-flagship.cfg")
    status, out = run(capsys, ["audit", "stabilizer", config])
    assert status == EXIT_OK
    (record,) = records(out)
    assert record["statistic"] == 0
    assert record["omega"] == ["-1/2", "0/1", "1/1"]


def test_coset_audit_farey(capsys, tmp_path):
    config = write_experiment(tmp_path, FAREY_EXPERIMENT)
    status, out = run(capsys, ["audit", "coset", config])
    assert status == EXIT_OK
    (record,) = records(out)
    assert record["statistic"] == 0
    assert record["subgroup_bound"] == 0
    assert record["details"]["samples"] == 21


def test_family(capsys, tmp_path):
    config = write_experiment(
        tmp_path, FAMILY_EXPERIMENT.format(family="2 3 4 5; 6 7 8 9", power=8)
    )
    status, out = run(capsys, ["family", config])
    assert status == EXIT_OK
    found = records(out)
    (certificate,) = [r for r in found if r["kind"] == "certificate"]
    assert certificate["certified"] is True
    assert certificate["margin"] == "1/4"
    assert certificate["power"] == 8
    growth = [r for r in found if r["kind"] == "growth"]
    assert len(growth) == 4
    assert all(r["n_star"] == 256 for r in growth)


def test_family_inconclusive(capsys, tmp_path):
    config = write_experiment(
        tmp_path, FAMILY_EXPERIMENT.format(family="2 3 4 5; 6 7 8 9", power=2)
    )
    status, out = run(capsys, ["family", config])
    assert status == EXIT_INCONCLUSIVE
    (certificate,) = [r for r in records(out) if r["kind"] == "certificate"]
    assert certificate["certified"] is False


def test_family_exponent_below_power(capsys, tmp_path):
    config = write_experiment(
        tmp_path, FAMILY_EXPERIMENT.format(family="1 2 3 4", power=8)
    )
    assert main(["family", config]) == EXIT_ERROR


@pytest.mark.parametrize(
    "argv",
    [
        ["qm", "R^3"],
        ["audit", "avoidance"],
        ["family"],
    ],
)
def test_records_are_reproducible(capsys, tmp_path, argv):
    text = TWIST_EXPERIMENT
    if argv == ["family"]:
        text = FAMILY_EXPERIMENT.format(family="2 3 4 5; 6 7 8 9", power=8)
    config = write_experiment(tmp_path, text)
    first = run(capsys, argv + [config])
    assert run(capsys, argv + [config]) == first

import json
import random
import subprocess
import sys
from fractions import Fraction

import pytest

from twcut.cli import main
from twcut.decomposition import parse_td, validate_tree_decomposition
from twcut.generators import random_instance
from twcut.instance import read_instance, serialize_instance
from twcut.pipeline import PipelineError, SolveOptions, run_solve

from conftest import C4_TEXT, K2_TEXT


@pytest.fixture
def files(tmp_path):
    (tmp_path / "k2.sc").write_text(K2_TEXT)
    (tmp_path / "c4.sc").write_text(C4_TEXT)
    rng = random.Random(5)
    (tmp_path / "r16.sc").write_text(serialize_instance(random_instance(rng, 16, 2, 0.5, 4)))
    return tmp_path


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_k2_exact_route(files, capsys):
    code, rep = run(capsys, "solve", files / "k2.sc")
    assert code == 0
    assert rep["phi"] == "5/2" and rep["mode"] == "exact" and rep["approx_certificate"]


def test_k2_force_lp(files, capsys):
    code, rep = run(capsys, "solve", files / "k2.sc", "--force-lp")
    assert code == 0
    assert rep["phi"] == "5/2" and rep["opt_lp"] == "5/2" and rep["approx_certificate"]
    assert rep["mode"] == "derandomized" and rep["ell_used"] == 2


def test_missing_file(capsys, tmp_path):
    code, rep = run(capsys, "solve", tmp_path / "missing.sc")
    assert code != 0 and rep["phase"] == "parse"


def test_bad_instance_reports_parse_phase(capsys, tmp_path):
    (tmp_path / "bad.sc").write_text("p sc 2 1 1\ns 0 0 1\nd 0 1 1\n")
    code, rep = run(capsys, "solve", tmp_path / "bad.sc")
    assert code != 0 and rep["phase"] == "parse" and "line 2" in rep["error"]


def test_default_path_on_16_nodes(files, capsys):
    code, rep = run(capsys, "solve", files / "r16.sc")
    assert code == 0 and rep["mode"] == "derandomized" and rep["ell_used"] == 2
    inst = read_instance(files / "r16.sc")
    cap, dem = inst.crossing(sum(1 << v for v in rep["cut"]))
    assert Fraction(cap, dem) == Fraction(rep["phi"])
    assert Fraction(rep["phi"]) <= 2 * Fraction(rep["opt_lp"])
    assert rep["rounding_stats"]["invariant_held"]


def test_reports_deterministic(files):
    opts = SolveOptions(force_lp=True, mode="randomized", seed=7)
    a = run_solve(files / "c4.sc", opts).to_json()
    b = run_solve(files / "c4.sc", opts).to_json()
    a.pop("timing"), b.pop("timing")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_td_ingest_and_decompose(files, capsys):
    code, rep = run(capsys, "decompose", files / "c4.sc", "--balance", "--out", files / "c4.td")
    assert code == 0 and rep["stats"]["binary"]
    td, n = parse_td((files / "c4.td").read_text())
    assert n == 4 and validate_tree_decomposition(read_instance(files / "c4.sc"), td).ok
    code, rep = run(capsys, "solve", files / "c4.sc", "--td", files / "c4.td", "--force-lp")
    assert code == 0 and rep["phi"] == "1/1"


def test_decompose_grouped(files, capsys):
    code, rep = run(capsys, "decompose", files / "r16.sc", "--ell", "3")
    assert code == 0 and rep["td"].startswith("s td ")
    assert rep["stats"]["grouped_bags"] <= rep["stats"]["bags"]


def test_invalid_td_rejected(files, capsys):
    (files / "bad.td").write_text("s td 1 2 4\nb 1 1 2\n")
    code, rep = run(capsys, "solve", files / "c4.sc", "--td", files / "bad.td", "--force-lp")
    assert code != 0 and rep["phase"] == "decompose"


def test_dump_lp(files, capsys):
    dump = files / "k2.lp"
    code, _ = run(capsys, "solve", files / "k2.sc", "--force-lp", "--dump-lp", dump)
    text = dump.read_text()
    assert code == 0 and "y_0_1" in text and text.rstrip().endswith("end")


@pytest.mark.parametrize("mode", ["randomized", "derandomized"])
def test_round(files, capsys, mode):
    code, rep = run(capsys, "round", files / "c4.sc", "--mode", mode, "--samples", "16", "--seed", "3")
    assert code == 0
    assert Fraction(rep["numerator"], rep["denominator"]) == Fraction(rep["phi"])
    assert Fraction(rep["phi"]) <= 2 * Fraction(rep["opt_lp"])


def test_exact(files, capsys):
    code, rep = run(capsys, "exact", files / "c4.sc")
    assert code == 0 and rep["phi"] == "1/1"


def test_bench(files, capsys):
    code, rep = run(capsys, "bench", files, "--force-lp", "--jobs", "2")
    assert code == 0 and rep["all_ok"]
    assert {r["instance"] for r in rep["rows"]} == {"k2.sc", "c4.sc", "r16.sc"}
    assert all(r["within_2"] for r in rep["rows"])


def test_memory_guard_is_labelled(files):
    with pytest.raises(PipelineError) as err:
        run_solve(files / "c4.sc", SolveOptions(force_lp=True, memory_guard=5))
    assert err.value.phase == "build_lp"


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "twcut", "exact", str(files / "k2.sc")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["phi"] == "5/2"

"""Every CLI path checked as a thin shell: outputs must match the
library calls the subcommand wraps, and exit codes must follow the
0 / 1 (usage) / 2 (data) contract."""

import csv
import io
import json
import shutil
import signal
import socket
import subprocess
import sys
import time
import urllib.request

import numpy as np
import pytest

from hypergrid.cli import _flatten_subcommands, main
from hypergrid.cluster import build_bst, cell_density, evaluate_purity, point_labels
from hypergrid.dataset import (
    BoundingBox,
    PointSet,
    apply_transform,
    fit_pca,
    generate_mixture,
    load,
    random_components,
    save,
)
from hypergrid.estimate import FitConfig, estimate_all, evaluate_estimator
from hypergrid.grid import build_grid, sample_box
from hypergrid.kdtree import Polytope, build_kdtree, query_polytope, save_kdtree
from hypergrid.knn import knn_search
from hypergrid.voronoi import build_voronoi, locate_cell, save_voronoi


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """On-disk inputs shared by the subcommand tests."""
    root = tmp_path_factory.mktemp("cli")
    comps = random_components(3, 3, seed=201)
    pts = generate_mixture(1500, 3, comps, seed=202)
    ref = PointSet(pts.coords, labels=pts.labels,
                   targets=(pts.coords ** 2).sum(axis=1))
    save(ref, str(root / "pts.hgps"))
    save(PointSet(pts.coords[:40] + 0.01), str(root / "unk.hgps"))
    tree = build_kdtree(ref)
    save_kdtree(tree, str(root / "pts.hgkd"))
    return {"root": root, "points": ref, "tree": tree,
            "pts": str(root / "pts.hgps"),
            "unk": str(root / "unk.hgps"),
            "kd": str(root / "pts.hgkd")}


def run_cli(argv, capsys):
    """Invoke main() and return (exit code, stdout, stderr)."""
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def json_rows(out):
    return json.loads(out)


def csv_rows(out):
    return list(csv.reader(io.StringIO(out)))


# ---------------------------------------------------------------------------
# parsing and exit codes


def test_two_word_subcommands_are_flattened():
    assert _flatten_subcommands(["voronoi", "build", "-i", "x"]) == \
        ["voronoi-build", "-i", "x"]
    assert _flatten_subcommands(["estimate", "eval", "--ref", "r"]) == \
        ["estimate-eval", "--ref", "r"]
    assert _flatten_subcommands(["bench", "kd"]) == ["bench-kd"]
    assert _flatten_subcommands(["estimate", "--ref", "r"]) == \
        ["estimate", "--ref", "r"]
    assert _flatten_subcommands([]) == []


def test_unknown_flag_exits_one_with_usage(capsys):
    code, _, err = run_cli(["generate", "--bogus"], capsys)
    assert code == 1
    assert "usage:" in err


def test_unknown_subcommand_and_empty_argv_exit_one(capsys):
    assert run_cli(["frobnicate"], capsys)[0] == 1
    assert run_cli([], capsys)[0] == 1


def test_help_exits_zero(capsys):
    assert run_cli(["--help"], capsys)[0] == 0
    assert run_cli(["knn", "--help"], capsys)[0] == 0


def test_missing_input_file_exits_two(work, capsys):
    code, _, err = run_cli(
        ["import", "-i", str(work["root"] / "ghost.hgps"), "-o", "x.hgps"],
        capsys)
    assert code == 2
    assert "error:" in err


def test_malformed_box_exits_two(work, capsys):
    code, _, err = run_cli(
        ["query", "-i", work["pts"], "--tree", work["kd"], "--box", "junk"],
        capsys)
    assert code == 2
    assert "error:" in err


def test_query_without_a_region_exits_two(work, capsys):
    code, _, err = run_cli(
        ["query", "-i", work["pts"], "--tree", work["kd"]], capsys)
    assert code == 2
    assert "--box" in err


# ---------------------------------------------------------------------------
# dataset subcommands


def test_generate_is_deterministic(tmp_path, capsys):
    args = ["generate", "--n", "3000", "--dim", "5", "--components", "3",
            "--seed", "7"]
    a, b = str(tmp_path / "a.hgps"), str(tmp_path / "b.hgps")
    assert run_cli(args + ["-o", a], capsys)[0] == 0
    assert run_cli(args + ["-o", b], capsys)[0] == 0
    assert (tmp_path / "a.hgps").read_bytes() == (tmp_path / "b.hgps").read_bytes()
    pts = load(a)
    assert pts.n == 3000 and pts.dim == 5 and pts.labels is not None


def test_generate_writes_csv_by_extension(tmp_path, capsys):
    out = str(tmp_path / "d.csv")
    code, _, _ = run_cli(["generate", "--n", "50", "--dim", "2",
                          "--components", "1", "-o", out], capsys)
    assert code == 0
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header.startswith("x0,")
    assert load(out).n == 50


def test_import_converts_binary_to_csv_and_back(work, tmp_path, capsys):
    as_csv = str(tmp_path / "pts.csv")
    back = str(tmp_path / "pts.hgps")
    assert run_cli(["import", "-i", work["pts"], "-o", as_csv], capsys)[0] == 0
    assert run_cli(["import", "-i", as_csv, "-o", back], capsys)[0] == 0
    pts = load(back)
    assert np.allclose(pts.coords, work["points"].coords)
    assert np.array_equal(pts.labels, work["points"].labels)


def test_pca_output_matches_the_library_projection(work, tmp_path, capsys):
    out = str(tmp_path / "p.hgps")
    code, _, err = run_cli(
        ["pca", "-i", work["pts"], "-o", out, "--components", "2", "--verbose"],
        capsys)
    assert code == 0
    assert "explained variance" in err
    expected = apply_transform(fit_pca(work["points"], 2), work["points"])
    got = load(out)
    assert got.dim == 2
    assert np.allclose(got.coords, expected.coords)


def test_whiten_gives_unit_variance_columns(work, tmp_path, capsys):
    out = str(tmp_path / "w.hgps")
    assert run_cli(["whiten", "-i", work["pts"], "-o", out], capsys)[0] == 0
    assert np.allclose(load(out).coords.var(axis=0, ddof=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------------------
# grid and kd subcommands


def test_grid_build_and_sample_match_the_library(work, tmp_path, capsys):
    grid_path = str(tmp_path / "g.hglg")
    code, _, _ = run_cli(["grid-build", "-i", work["pts"], "-o", grid_path,
                          "--base", "64", "--seed", "5"], capsys)
    assert code == 0
    box = BoundingBox(np.full(3, -30.0), np.full(3, 30.0))
    grid = build_grid(work["points"], base=64, seed=5)
    expected = sample_box(grid, work["points"], box, 40)
    code, out, _ = run_cli(
        ["sample", "-i", work["pts"], "--grid", grid_path,
         "--box=-30,-30,-30:30,30,30", "--n", "40", "--format", "json"],
        capsys)
    assert code == 0
    rows = json_rows(out)
    assert [r["id"] for r in rows] == [int(i) for i in expected]
    first = rows[0]
    assert np.allclose([first["x0"], first["x1"], first["x2"]],
                       work["points"].coords[first["id"]])
    assert first["target"] == pytest.approx(
        float(work["points"].targets[first["id"]]))


def test_kd_build_writes_a_loadable_tree(work, tmp_path, capsys):
    out = str(tmp_path / "t.hgkd")
    assert run_cli(["kd-build", "-i", work["pts"], "-o", out], capsys)[0] == 0
    from hypergrid.kdtree import load_kdtree
    tree = load_kdtree(out)
    assert tree.n_leaves == work["tree"].n_leaves
    assert np.array_equal(tree.perm, work["tree"].perm)


def test_query_box_matches_the_library(work, capsys):
    box = BoundingBox(np.full(3, -15.0), np.full(3, 15.0))
    expected = query_polytope(work["tree"], work["points"], Polytope.from_box(box))
    code, out, err = run_cli(
        ["query", "-i", work["pts"], "--tree", work["kd"],
         "--box=-15,-15,-15:15,15,15", "--format", "json", "--verbose"],
        capsys)
    assert code == 0
    rows = json_rows(out)
    assert expected.size > 0
    assert [r["id"] for r in rows] == [int(i) for i in expected]
    assert "returned" in err


def test_query_halfspace_file_matches_the_library(work, tmp_path, capsys):
    hs = tmp_path / "cuts.csv"
    normals = np.array([[1.0, 1.0, 0.0], [-1.0, 0.5, 0.25]])
    offsets = np.array([9.0, 4.0])
    hs.write_text("".join(f"{r[0]},{r[1]},{r[2]},{o}\n"
                          for r, o in zip(normals, offsets)))
    expected = query_polytope(work["tree"], work["points"],
                              Polytope(normals, offsets))
    code, out, _ = run_cli(
        ["query", "-i", work["pts"], "--tree", work["kd"],
         "--halfspaces", str(hs), "--format", "json"], capsys)
    assert code == 0
    assert [r["id"] for r in json_rows(out)] == [int(i) for i in expected]


def test_knn_prints_ids_and_distances(work, capsys):
    expected = knn_search(work["tree"], work["points"],
                          np.array([1.0, 2.0, 3.0]), 5)
    code, out, _ = run_cli(
        ["knn", "-i", work["pts"], "--tree", work["kd"],
         "--query", "1,2,3", "--k", "5", "--format", "csv"], capsys)
    assert code == 0
    rows = csv_rows(out)
    assert rows[0] == ["rank", "id", "distance"]
    assert [int(r[1]) for r in rows[1:]] == [int(i) for i in expected.ids]
    assert np.allclose([float(r[2]) for r in rows[1:]], expected.distances)


# ---------------------------------------------------------------------------
# voronoi, cluster, estimate


def test_voronoi_build_locate_density_match_the_library(work, tmp_path, capsys):
    idx_path = str(tmp_path / "v.hgvr")
    code, _, _ = run_cli(["voronoi", "build", "-i", work["pts"],
                          "-o", idx_path, "--seeds", "12", "--seed", "3"],
                         capsys)
    assert code == 0
    index = build_voronoi(work["points"], 12, seed=3)

    expected = locate_cell(index, np.array([0.5, -0.5, 1.5]))
    code, out, _ = run_cli(["voronoi", "locate", "--index", idx_path,
                            "--query", "0.5,-0.5,1.5", "--format", "json"],
                           capsys)
    assert code == 0
    row = json_rows(out)[0]
    assert row == {"cell": expected.cell, "walk_cell": expected.walk_cell,
                   "steps": expected.steps, "walk_missed": expected.walk_missed}

    density, fallback = cell_density(index, "volume")
    code, out, _ = run_cli(["voronoi", "density", "--index", idx_path,
                            "--mode", "volume", "--format", "json"], capsys)
    assert code == 0
    rows = json_rows(out)
    assert len(rows) == 12
    assert np.allclose([r["density"] for r in rows], density)
    assert [r["fallback"] for r in rows] == [bool(f) for f in fallback]


def test_cluster_rows_match_the_library_and_report_purity(work, capsys):
    index = build_voronoi(work["points"], 24, seed=9)
    expected = point_labels(build_bst(index, mode="count"), index)
    code, out, err = run_cli(
        ["cluster", "-i", work["pts"], "--nseed", "24", "--seed", "9",
         "--format", "csv"], capsys)
    assert code == 0
    rows = csv_rows(out)
    assert rows[0] == ["point", "cluster"]
    assert len(rows) == 1 + work["points"].n
    assert [int(r[1]) for r in rows[1:]] == [int(c) for c in expected]
    assert "purity" in err
    reported = float(err.split("purity", 1)[1].split()[0])
    assert reported == pytest.approx(
        evaluate_purity(work["points"].labels, expected), abs=1e-6)


def test_estimate_writes_a_targets_column(work, tmp_path, capsys):
    out_path = str(tmp_path / "est.hgps")
    code, _, _ = run_cli(
        ["estimate", "--ref", work["pts"], "--unknown", work["unk"],
         "--k", "16", "--order", "1", "-o", out_path], capsys)
    assert code == 0
    expected = estimate_all(work["points"], load(work["unk"]),
                            FitConfig(k=16, order=1))
    got = load(out_path)
    assert got.targets is not None
    assert np.array_equal(got.targets, expected.estimates)


def test_estimate_threads_do_not_change_stdout(work, capsys):
    args = ["estimate", "--ref", work["pts"], "--unknown", work["unk"],
            "--k", "12", "--format", "json"]
    code_a, out_a, _ = run_cli(args, capsys)
    code_b, out_b, _ = run_cli(args + ["--threads", "3"], capsys)
    assert code_a == 0 and code_b == 0
    assert out_a == out_b


def test_estimate_eval_row_matches_the_library(work, capsys):
    expected = evaluate_estimator(work["points"],
                                  FitConfig(order=0), FitConfig(order=1),
                                  folds=3, seed=4, bootstrap=100)
    code, out, _ = run_cli(
        ["estimate", "eval", "--ref", work["pts"], "--folds", "3",
         "--seed", "4", "--bootstrap", "100", "--format", "json"], capsys)
    assert code == 0
    row = json_rows(out)[0]
    assert row["rms_a"] == pytest.approx(expected.rms_a)
    assert row["rms_b"] == pytest.approx(expected.rms_b)
    assert row["improvement_percent"] == pytest.approx(
        expected.improvement_percent)
    assert row["folds"] == 3 and row["n_points"] == work["points"].n


# ---------------------------------------------------------------------------
# bench and output formats


def test_bench_kd_emits_one_csv_row_per_selectivity(capsys, tmp_path):
    code, out, _ = run_cli(
        ["bench", "kd", "--selectivities", "0.02,0.1,0.3",
         "--n", "4000", "--dim", "3", "--components", "4", "--seed", "11"],
        capsys)
    assert code == 0
    rows = csv_rows(out)
    header = rows[0]
    assert "speedup" in header and "selectivity" in header
    assert len(rows) == 1 + 3
    targets = sorted(float(r[header.index("target")]) for r in rows[1:])
    assert targets == [0.02, 0.1, 0.3]
    for r in rows[1:]:
        assert int(r[header.index("returned")]) > 0
        assert float(r[header.index("speedup")]) > 0.0


def test_table_format_aligns_columns(work, capsys):
    code, out, _ = run_cli(
        ["knn", "-i", work["pts"], "--tree", work["kd"],
         "--query", "0,0,0", "--k", "2"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["rank", "id", "distance"]
    assert len(lines) == 3
    assert lines[1].startswith("0")


# ---------------------------------------------------------------------------
# entry point and serve


def test_console_script_is_installed():
    exe = shutil.which("hypergrid")
    assert exe is not None
    proc = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "hypergrid" in proc.stdout


def test_serve_answers_health_until_killed(work, tmp_path):
    grid_path = tmp_path / "serve.hglg"
    from hypergrid.grid import save_grid
    save_grid(build_grid(work["points"], base=64, seed=1), str(grid_path))
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = tmp_path / "svc.ini"
    config.write_text(
        f"[service]\nlisten = 127.0.0.1:{port}\n\n"
        f"[dataset:demo]\npoints = {work['pts']}\ngrid = {grid_path}\n")
    proc = subprocess.Popen(
        [sys.executable, "-m", "hypergrid.cli", "serve", "--config", str(config)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        deadline = time.monotonic() + 20.0
        body = None
        while time.monotonic() < deadline:
            try:
                with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/health", timeout=1.0) as resp:
                    body = json.load(resp)
                break
            except OSError:
                time.sleep(0.2)
        assert body is not None, "service never answered"
        assert body["datasets"] == ["demo"]
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10.0)
        except subprocess.TimeoutExpired:
            proc.kill()

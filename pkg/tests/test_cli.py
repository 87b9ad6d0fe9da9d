import json

import numpy as np
import pytest

from ububu.cli import cmd_ess_report, main
from ububu.cli.ingest import (
    IDX_IMAGES,
    IDX_LABELS,
    dataset_hash,
    downscale,
    ingest_matches,
    ingest_mnist,
    load_dataset,
    read_idx,
    save_dataset,
)
from ububu.cli.report import ResultRow, histogram, read_reports, read_results, write_results
from ububu.errors import DataError


def write_idx(path, magic: int, array: np.ndarray) -> str:
    header = np.array([magic, *array.shape], dtype=">u4").tobytes()
    path.write_bytes(header + array.astype(np.uint8).tobytes())
    return str(path)


@pytest.fixture
def mnist(tmp_path):
    images = np.zeros((4, 28, 28), dtype=np.uint8)
    images[0] = 255
    images[1, :4, :4] = 255
    labels = np.array([0, 1, 2, 9], dtype=np.uint8)
    return (write_idx(tmp_path / "images.idx", IDX_IMAGES, images),
            write_idx(tmp_path / "labels.idx", IDX_LABELS, labels))


def write_csv(tmp_path, text: str) -> str:
    path = tmp_path / "matches.csv"
    path.write_text(text, encoding="utf-8")
    return str(path)


def write_config(tmp_path, config: dict, name: str = "experiment.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path)


def small_experiment(**sampler) -> dict:
    return {
        "seed": 1,
        "model": {"kind": "gaussian", "dim": 2, "kappa": 4},
        "sampler": {"mode": "ububu", "N": 8, **sampler},
        "diagnostics": {"runs": 8, "bootstrap": 50},
    }


def row(mode: str, grads_per_ess: float, function: str = "x0") -> ResultRow:
    return ResultRow("abc", "gaussian", mode, 2, 4.0, function, 0.1, 0.01, 10.0, grads_per_ess, grads_per_ess / 2,
                     grads_per_ess * 2, 5.0, 1)


# Ingestion

def test_read_idx(mnist):
    images = read_idx(mnist[0], IDX_IMAGES)
    assert images.shape == (4, 28, 28)
    assert read_idx(mnist[1], IDX_LABELS).tolist() == [0, 1, 2, 9]


def test_read_idx_bad_magic(mnist):
    with pytest.raises(DataError, match="bad IDX magic"):
        read_idx(mnist[0], IDX_LABELS)


def test_read_idx_truncated(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(np.array([IDX_LABELS, 10], dtype=">u4").tobytes() + bytes(3))
    with pytest.raises(DataError, match="truncated IDX body"):
        read_idx(str(path), IDX_LABELS)


def test_downscale_means_blocks():
    images = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    np.testing.assert_allclose(downscale(images, 2)[0], [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(DataError):
        downscale(images, 3)


def test_ingest_mnist(mnist):
    model = ingest_mnist(*mnist, factor=4)
    assert model.n_features == 50
    assert model.dim == 500
    assert model.labels.tolist() == [1, 2, 3, 10]
    np.testing.assert_allclose(model.covariates[0], 1.0)
    assert model.covariates[1, 0] == 1.0
    assert model.covariates[1, 1] == pytest.approx(0.0)
    assert model.covariates[2, :-1].max() == 0.0


def test_ingest_mnist_subsample(mnist):
    assert ingest_mnist(*mnist, subsample=2).n_data == 2


def test_ingest_matches(tmp_path):
    model = ingest_matches(write_csv(tmp_path, "round,home,away,hg,ag\n1,Ajax,PSV,2,1\n"))
    assert model.dim == 4
    assert model.n_data == 1
    assert model.team_names == ["Ajax", "PSV"]


@pytest.mark.parametrize("text,row_number", [
    ("round,home,away,hg,ag\n1,A,B,2,1\n2,B,A,two,0\n", 3),
    ("round,home,away,hg,ag\n1,A,A,2,1\n", 2),
    ("round,home,away,hg,ag\n1,A,B,-1,1\n", 2),
    ("round,home,away,hg,ag\n1,A,B,2\n", 2),
    ("round,home,away,hg,ag,venue\n1,A,B,2,1,X\n", 1),
])
def test_malformed_matches(tmp_path, text, row_number):
    with pytest.raises(DataError) as e:
        ingest_matches(write_csv(tmp_path, text))
    assert e.value.row == row_number
    assert str(e.value).startswith(f"row {row_number}:")


def test_saved_dataset_keeps_its_hash(tmp_path, mnist):
    model = ingest_mnist(*mnist, factor=7)
    path = str(tmp_path / "mnist.npz")
    digest = save_dataset(model, path)
    loaded = load_dataset(path)
    assert dataset_hash(loaded) == digest
    assert loaded.value(np.zeros(loaded.dim)) == pytest.approx(model.value(np.zeros(model.dim)))


def test_load_unreadable_dataset(tmp_path):
    path = tmp_path / "broken.npz"
    path.write_bytes(b"not a dataset")
    with pytest.raises(DataError):
        load_dataset(str(path))


# Reports

def test_histogram_single_value():
    bins = histogram([3.0])
    assert len(bins) == 1
    assert bins[0][2] == 1


def test_histogram_bin_count():
    bins = histogram(np.arange(9.0))
    assert len(bins) == 3
    assert sum(count for _, _, count in bins) == 9


def test_read_results(tmp_path):
    path = str(tmp_path / "results.csv")
    write_results(path, [row("ububu", 50.0), row("ububu", 20.0, "norm")], {"seed": 1})
    provenance, rows = read_results(path)
    assert provenance == {"seed": "1"}
    assert rows == [row("ububu", 50.0), row("ububu", 20.0, "norm")]


def test_ess_report_per_mode(tmp_path):
    for name, mode, values in [("a", "ububu", [10.0, 40.0]), ("b", "rhmc", [300.0, 100.0])]:
        (tmp_path / name).mkdir()
        write_results(str(tmp_path / name / "results.csv"), [row(mode, v, f"x{i}") for i, v in enumerate(values)], {})
    output = cmd_ess_report(str(tmp_path), str(tmp_path / "report"))
    _, lines = read_table(output + "/summary.csv")
    assert lines[0] == ["mode", "max_grads_per_ess", "ci_lo", "ci_hi", "function", "rows"]
    assert [(r[0], float(r[1]), r[4]) for r in lines[1:]] == [("rhmc", 300.0, "x0"), ("ububu", 40.0, "x1")]
    _, bins = read_table(output + "/histogram.csv")
    assert sum(int(r[3]) for r in bins[1:]) == 4


def read_table(path: str):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    comments = [line for line in lines if line.startswith("# ")]
    return comments, [line.split(",") for line in lines if not line.startswith("# ")]


# Command line

def test_run_writes_results(tmp_path):
    output = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, small_experiment()), "--output", str(output)]) == 0
    provenance, rows = read_results(str(output / "results.csv"))
    assert [r.function for r in rows] == ["x0", "x1", "norm"]
    assert {r.mode for r in rows} == {"ububu"}
    assert rows[0].kappa == pytest.approx(4.0)
    assert provenance["seed"] == "1"
    assert len(provenance["config_sha256"]) == 64
    reports = json.loads((output / "reports.json").read_text(encoding="utf-8"))["reports"]
    assert len(reports) == 8
    assert json.loads((output / "timing.json").read_text(encoding="utf-8"))["runs"] == 8


def test_saved_reports_recompute(tmp_path):
    output = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, small_experiment()), "--output", str(output)]) == 0
    provenance, reports = read_reports(str(output / "reports.json"))
    assert provenance["seed"] == 1
    assert len({r.seed for r in reports}) == 8
    for report in reports:
        assert report.mode == "ububu"
        np.testing.assert_allclose(report.recompute(), report.value, rtol=1e-12, atol=1e-12)


def test_run_is_reproducible(tmp_path):
    config = write_config(tmp_path, small_experiment())
    assert main(["run", "--config", config, "--output", str(tmp_path / "one")]) == 0
    assert main(["run", "--config", config, "--output", str(tmp_path / "two"), "--threads", "3"]) == 0
    for name in ("results.csv", "reports.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_seed_override_changes_results(tmp_path):
    config = write_config(tmp_path, small_experiment())
    assert main(["run", "--config", config, "--output", str(tmp_path / "one")]) == 0
    assert main(["run", "--config", config, "--output", str(tmp_path / "two"), "--seed", "2"]) == 0
    assert (tmp_path / "one" / "results.csv").read_bytes() != (tmp_path / "two" / "results.csv").read_bytes()


def test_run_rhmc(tmp_path):
    config = small_experiment(mode="rhmc", rhmc={"K": 50})
    del config["sampler"]["N"]
    output = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, config), "--output", str(output)]) == 0
    _, rows = read_results(str(output / "results.csv"))
    assert {r.mode for r in rows} == {"rhmc"}


def test_run_on_ingested_dataset(tmp_path, capsys):
    dataset = str(tmp_path / "gaussian.npz")
    assert main(["ingest", "gaussian", "--sizes", '{"dim": 3, "kappa": 10}', "--output", dataset]) == 0
    digest = capsys.readouterr().out.strip()
    assert digest == dataset_hash(load_dataset(dataset))
    config = small_experiment()
    config["model"] = {"kind": "gaussian", "dataset": dataset}
    output = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path, config), "--output", str(output)]) == 0
    _, rows = read_results(str(output / "results.csv"))
    assert rows[0].d == 3


def test_dataset_of_another_kind(tmp_path):
    dataset = str(tmp_path / "quartic.npz")
    assert main(["ingest", "quartic", "--sizes", '{"dim": 2, "kappa": 4}', "--output", dataset]) == 0
    config = small_experiment()
    config["model"] = {"kind": "gaussian", "dataset": dataset}
    assert main(["run", "--config", write_config(tmp_path, config), "--output", str(tmp_path / "out")]) == 1


def test_invalid_config_exit_code(tmp_path, capsys):
    config = write_config(tmp_path, small_experiment(c_R=0.9))
    assert main(["run", "--config", config, "--output", str(tmp_path / "out")]) == 1
    assert "sampler.c_R" in capsys.readouterr().err


def test_missing_sizes_exit_code(tmp_path):
    assert main(["ingest", "gaussian", "--sizes", '{"dim": 3}', "--output", str(tmp_path / "g.npz")]) == 1
    assert main(["ingest", "gaussian", "--sizes", "{dim", "--output", str(tmp_path / "g.npz")]) == 1


def test_ess_report_without_results(tmp_path):
    assert main(["ess-report", str(tmp_path)]) == 1


def test_strong_order_command(tmp_path):
    config = small_experiment()
    config["strong_order"] = {"kernel": "ubu", "stepsizes": [0.5, 0.25, 0.125, 0.0625], "replicates": 4,
                              "duration": 0.8}
    output = tmp_path / "out"
    assert main(["strong-order", "--config", write_config(tmp_path, config), "--output", str(output)]) == 0
    _, lines = read_table(str(output / "strong_order.csv"))
    assert lines[0] == ["h", "rms_gap", "slope", "slope_lo", "slope_hi"]
    assert len(lines) == 5


def test_strong_order_needs_a_wide_stepsize_range(tmp_path):
    config = small_experiment()
    config["strong_order"] = {"kernel": "ubu", "stepsizes": [0.4, 0.3, 0.2, 0.1], "replicates": 2, "duration": 0.4}
    assert main(["strong-order", "--config", write_config(tmp_path, config), "--output", str(tmp_path)]) == 2


def test_strong_order_section_required(tmp_path):
    assert main(["strong-order", "--config", write_config(tmp_path, small_experiment())]) == 1

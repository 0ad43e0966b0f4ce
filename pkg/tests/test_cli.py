"""End-to-end tests of the command line interface, run in process."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mixdg import (
    ClassEmbeddings,
    DomainDataset,
    LabeledSample,
    load_checkpoint,
    load_dataset,
    save_dataset,
)
from mixdg.cli import INCOMPLETE_MARKER, build_parser, main
from mixdg.config import CONFIG_KEYS

SMALL_DATA = [
    "--set", "data.classes=3",
    "--set", "data.domains=2",
    "--set", "data.n_per_cell=6",
    "--set", "data.input_dim=6",
]
SMALL_TRAIN = [
    "--set", "train.epochs=2",
    "--set", "train.batch_size=16",
    "--set", "model.embed_dim=8",
    "--set", "model.hidden_dim=0",
    "--set", "loss.tau=0.1",
]


def _gen(tmp_path, name="data.jsonl", extra=()):
    path = tmp_path / name
    assert main(["gen-data", "--out", str(path), *SMALL_DATA, *extra]) == 0
    return path


def _parse_fields(text):
    fields = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split(None, 1)
        fields[parts[0]] = parts[1].strip() if len(parts) > 1 else ""
    return fields


def test_help_lists_every_config_key(capsys):
    for argv in (["--help"], ["train", "--help"], ["gen-data", "--help"]):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == 0
        out = capsys.readouterr().out
        for key in CONFIG_KEYS:
            assert key.name in out
            assert json.dumps(key.default) in out


def test_parser_subcommands():
    parser = build_parser()
    text = parser.format_help()
    for cmd in ("gen-data", "train", "eval", "compare-losses"):
        assert cmd in text


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mixdg", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout


def test_gen_data(tmp_path, capsys):
    path = _gen(tmp_path)
    out = capsys.readouterr().out
    assert f"wrote {path}" in out
    assert "36 samples" in out
    assert "3 classes x 2 domains" in out
    ds, table = load_dataset(path)
    assert table is None
    assert ds.n_classes == 3 and ds.n_domains == 2 and len(ds) == 36


def test_gen_data_byte_stable(tmp_path):
    a = _gen(tmp_path, "a.jsonl")
    b = _gen(tmp_path, "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    c = _gen(tmp_path, "c.jsonl", extra=("--set", "data.seed=8"))
    assert a.read_bytes() != c.read_bytes()


def test_gen_data_config_file(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text('{"data.classes": 2, "data.domains": 2, "data.n_per_cell": 3}\n')
    path = tmp_path / "data.jsonl"
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(path)]) == 0
    ds, _ = load_dataset(path)
    assert ds.n_classes == 2 and len(ds) == 12
    capsys.readouterr()


def test_train_outputs(tmp_path, capsys):
    data = _gen(tmp_path)
    capsys.readouterr()
    out_dir = tmp_path / "run"
    code = main(["train", "--data", str(data), "--out", str(out_dir), *SMALL_TRAIN])
    assert code == 0
    stdout = capsys.readouterr().out

    # The effective configuration is echoed first, in registry order.
    # Data keys show their defaults here; only the train overrides moved.
    lines = stdout.splitlines()
    assert lines[0] == "data.classes = 7"
    assert "train.epochs = 2" in lines[: len(CONFIG_KEYS)]
    assert "model.hidden_dim = 0" in lines[: len(CONFIG_KEYS)]
    assert "target domain accuracy (%)" in stdout
    assert "zero-shot" in stdout and "finetuned" in stdout

    assert not (out_dir / INCOMPLETE_MARKER).exists()
    assert json.loads((out_dir / "config.json").read_text())["train.epochs"] == 2
    report = (out_dir / "report.txt").read_text()
    assert report.splitlines()[0] == "target domain accuracy (%)"

    for i, domain in enumerate(("domain_0", "domain_1")):
        curves = (out_dir / f"curves_{i}_{domain}.csv").read_text()
        assert curves.splitlines()[0] == "epoch,loss_actual,loss_mix,loss_total,target_accuracy"
        assert len(curves.splitlines()) == 3
        ckpt = load_checkpoint(out_dir / f"checkpoint_{i}_{domain}.json")
        assert ckpt.metadata["target_domain"] == domain
        assert ckpt.metadata["config"]["train.epochs"] == 2
        assert 0.0 <= ckpt.metadata["baseline_accuracy"] <= 100.0
        assert 0.0 <= ckpt.metadata["final_accuracy"] <= 100.0


def test_train_reruns_byte_identical(tmp_path, capsys):
    data = _gen(tmp_path)
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    for d in dirs:
        assert main(["train", "--data", str(data), "--out", str(d), *SMALL_TRAIN]) == 0
    capsys.readouterr()
    for name in (
        "report.txt",
        "config.json",
        "curves_0_domain_0.csv",
        "curves_1_domain_1.csv",
        "checkpoint_0_domain_0.json",
        "checkpoint_1_domain_1.json",
    ):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_train_csv_report(tmp_path, capsys):
    data = _gen(tmp_path)
    out_dir = tmp_path / "run"
    code = main(
        ["train", "--data", str(data), "--out", str(out_dir), "--format", "csv", *SMALL_TRAIN]
    )
    assert code == 0
    capsys.readouterr()
    report = (out_dir / "report.csv").read_text()
    assert report.splitlines()[0] == "method,domain_0,domain_1,Avg"
    assert len(report.splitlines()) == 3


def test_train_failure_leaves_marker(tmp_path, capsys):
    # A single-domain dataset cannot run the held-out protocol; the
    # marker file must survive the failed run as a warning.
    data = tmp_path / "one.jsonl"
    assert main(["gen-data", "--out", str(data), *SMALL_DATA, "--set", "data.domains=1"]) == 0
    out_dir = tmp_path / "run"
    code = main(["train", "--data", str(data), "--out", str(out_dir), *SMALL_TRAIN])
    assert code == 1
    captured = capsys.readouterr()
    assert "error:" in captured.err
    assert (out_dir / INCOMPLETE_MARKER).exists()


def test_train_missing_data_file(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "r")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_override_fails(tmp_path, capsys):
    code = main(["gen-data", "--out", str(tmp_path / "x.jsonl"), "--set", "bogus=1"])
    assert code == 1
    assert "unknown config key" in capsys.readouterr().err


def test_eval_command(tmp_path, capsys):
    data = _gen(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out_dir), *SMALL_TRAIN]) == 0
    capsys.readouterr()

    ckpt = out_dir / "checkpoint_0_domain_0.json"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data)]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0].startswith("domain_0")
    assert lines[1].startswith("domain_1")
    assert lines[2].startswith("Avg")

    table_path = tmp_path / "table.csv"
    assert main(
        ["eval", "--checkpoint", str(ckpt), "--data", str(data), "--format", "csv", "--out", str(table_path)]
    ) == 0
    printed = capsys.readouterr().out
    written = table_path.read_text()
    assert printed == written
    assert written.splitlines()[0] == "domain,accuracy"
    # The averaging row is consistent with the per-domain rows.
    rows = [line.split(",") for line in written.splitlines()[1:]]
    values = [float(v) for _, v in rows[:-1]]
    assert rows[-1][0] == "Avg"
    # Both sides carry two-decimal rounding, so allow a cent of slack.
    assert float(rows[-1][1]) == pytest.approx(sum(values) / len(values), abs=0.011)


def test_eval_class_name_mismatch(tmp_path, capsys):
    data = _gen(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out_dir), *SMALL_TRAIN]) == 0
    other = _gen(tmp_path, "other.jsonl", extra=("--set", "data.classes=4"))
    capsys.readouterr()
    code = main(
        ["eval", "--checkpoint", str(out_dir / "checkpoint_0_domain_0.json"), "--data", str(other)]
    )
    assert code == 1
    assert "class names" in capsys.readouterr().err


def test_compare_losses_fresh_encoder(tmp_path, capsys):
    data = _gen(tmp_path)
    assert main(["compare-losses", "--data", str(data), *SMALL_TRAIN]) == 0
    out = capsys.readouterr().out
    fields = _parse_fields(out)
    assert fields["samples"] == "36"
    assert float(fields["max_abs_diff"]) > 0.0
    assert fields["identical"] == "no"
    assert fields["grad_pairs_skipped"] == "0" or int(fields["grad_pairs_skipped"]) >= 0


def test_compare_losses_with_checkpoint(tmp_path, capsys):
    data = _gen(tmp_path)
    out_dir = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out_dir), *SMALL_TRAIN]) == 0
    capsys.readouterr()
    out_path = tmp_path / "cmp.csv"
    code = main(
        [
            "compare-losses",
            "--data", str(data),
            "--checkpoint", str(out_dir / "checkpoint_0_domain_0.json"),
            "--format", "csv",
            "--out", str(out_path),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert printed == out_path.read_text()
    lines = printed.splitlines()
    assert lines[0] == "metric,value"
    metrics = dict(line.split(",", 1) for line in lines[1:])
    assert metrics["samples"] == "36"
    assert metrics["identical"] == "no"


def test_compare_losses_degenerate_embedded_table(tmp_path, capsys):
    # A pre-encoded dataset with an embedded duplicate-row class table:
    # the two variants coincide exactly on every sample.
    table = ClassEmbeddings(np.array([[1.0, 0.0], [1.0, 0.0]]), ("a", "b"))
    samples = tuple(
        LabeledSample(np.array([1.0, 0.0]), i % 2, 0) for i in range(4)
    )
    ds = DomainDataset(samples, ("a", "b"), ("d",), encoded=True)
    path = tmp_path / "degenerate.jsonl"
    save_dataset(ds, path, class_embeddings=table)

    assert main(["compare-losses", "--data", str(path), "--set", "loss.tau=1.0"]) == 0
    out = capsys.readouterr().out
    fields = _parse_fields(out)
    assert fields["identical"] == "yes"
    assert float(fields["max_abs_diff"]) == 0.0
    assert fields["grad_cosine_mean"] == ""
    assert fields["grad_pairs_skipped"] == "4"


def test_invalid_subcommand_exits_with_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["bogus-command"])
    assert e.value.code == 2

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dhgnn.cli import main
from dhgnn.features import read_feature_matrix
from dhgnn.model import Model
from dhgnn.netlist import parse_netlist
from dhgnn.partition import read_partition_file
from dhgnn.synth import SynthParams, generate_synthetic


@pytest.fixture(scope="module")
def design(tmp_path_factory):
    root = tmp_path_factory.mktemp("design")
    stem = str(root / "d")
    assert main(["generate", "--n-cells", "40", "--seed", "5",
                 "--noise-std", "0.1", "--out", stem]) == 0
    return stem


def test_generate_writes_parseable_files(design, capsys):
    with open(design + ".net", encoding="utf-8") as f:
        g, doc = parse_netlist(f)
    assert g.n_cells == 40 and g.n_nets == 40
    assert os.path.exists(design + ".tgt")


def test_generate_r2_ceiling_tunes_noise(tmp_path, capsys):
    stem = str(tmp_path / "r")
    assert main(["generate", "--n-cells", "60", "--seed", "1",
                 "--r2-ceiling", "0.95", "--out", stem]) == 0
    out = capsys.readouterr().out
    noise = float(out.rsplit("noise_std=", 1)[1].strip())
    assert noise > 0.0 and noise != 0.3


def test_features_subcommand_roundtrip(design, tmp_path, capsys):
    out = str(tmp_path / "d.dehf")
    rc = main(["features", "--netlist", design + ".net", "--deg-dist",
               "--lappe", "--pe-dim", "4", "--out", out])
    assert rc == 0
    table = read_feature_matrix(out)
    assert table.cell.shape[0] == 40
    names = [n for n, _ in table.cell_blocks]
    assert names == ["base", "deg_dist", "lap_pe"]
    assert "cell base 11" in capsys.readouterr().out


def test_partition_subcommand(design, tmp_path):
    out = str(tmp_path / "d.part")
    assert main(["partition", "--netlist", design + ".net", "--k", "2",
                 "--eps", "0.1", "--seed", "0", "--out", out]) == 0
    part_of = read_partition_file(out)
    sizes = np.bincount(part_of, minlength=2)
    assert part_of.max() == 1 and sizes.sum() == 40
    assert abs(int(sizes[0]) - int(sizes[1])) <= int(np.ceil(0.1 * 40)) * 2


def _write_config(path, design, **over):
    lines = {
        "task": "NET_REGRESSION", "target": "demand", "variant": "BASE",
        "seed": 0, "epochs": 6, "patience": 6, "lr": 0.003,
        "layers": 2, "dim": 8, "pd": "false", "lappe": "false",
        "deg_dist": "false", "netlist": design + ".net",
        "targets": design + ".tgt",
    }
    lines.update(over)
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()),
                    encoding="utf-8")
    return str(path)


def test_train_and_eval_subcommands(design, tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.cfg", design)
    out_dir = str(tmp_path / "run")
    assert main(["train", "--config", cfg, "--out-dir", out_dir]) == 0
    stdout = capsys.readouterr().out
    assert "mean test rmse:" in stdout
    for name in ("metrics.ndjson", "summary.tsv", "timings.tsv",
                 "training_curves.png", "test_scatter.png",
                 "fold0.ckpt", "fold3.ckpt"):
        assert os.path.exists(os.path.join(out_dir, name)), name

    report = str(tmp_path / "eval.json")
    rc = main(["eval", "--checkpoint", os.path.join(out_dir, "fold0.ckpt"),
               "--netlist", design + ".net", "--targets", design + ".tgt",
               "--out", report])
    assert rc == 0
    rec = json.loads(capsys.readouterr().out.strip())
    assert rec["split"] == "eval" and rec["rmse"] > 0.0
    with open(report, encoding="utf-8") as f:
        assert json.loads(f.read()) == rec


def test_eval_rejects_bare_checkpoint(design, tmp_path, capsys):
    g, _, tt = generate_synthetic(SynthParams(n_cells=10, seed=0))
    from dhgnn.features import assemble_features
    from dhgnn.model import ModelConfig
    from dhgnn.training import model_config
    table = assemble_features(g)
    model = Model.init(ModelConfig(layers=1, dim=4, variant="BASE"), table)
    bare = str(tmp_path / "bare.ckpt")
    model.save(bare)
    rc = main(["eval", "--checkpoint", bare, "--netlist", design + ".net",
               "--targets", design + ".tgt"])
    assert rc == 2
    assert "no run metadata" in capsys.readouterr().err


def test_ablate_subcommand(design, tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.cfg", design, epochs=3, patience=3)
    out_dir = str(tmp_path / "ab")
    rc = main(["ablate", "--config", cfg, "--seeds", "0",
               "--variants", "EHNN,BASE", "--out-dir", out_dir])
    assert rc == 0
    assert os.path.exists(os.path.join(out_dir, "ablation.tsv"))
    assert os.path.exists(os.path.join(out_dir, "ablation.png"))
    out = capsys.readouterr().out
    assert "EHNN:" in out and "BASE:" in out


def test_ablate_rejects_unknown_variant(design, tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.cfg", design)
    rc = main(["ablate", "--config", cfg, "--variants", "WAT"])
    assert rc == 2
    assert "unknown variant" in capsys.readouterr().err


def test_gradcheck_subcommand(capsys):
    rc = main(["gradcheck", "--variant", "BASE", "--layers", "1", "--dim", "4",
               "--n-cells", "8"])
    assert rc == 0
    assert "max rel err" in capsys.readouterr().out


def test_bad_config_returns_error_code(design, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("wat = 1\n", encoding="utf-8")
    rc = main(["train", "--config", str(bad)])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    stem = str(tmp_path / "m")
    proc = subprocess.run([sys.executable, "-m", "dhgnn", "generate",
                           "--n-cells", "12", "--out", stem],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert os.path.exists(stem + ".net")

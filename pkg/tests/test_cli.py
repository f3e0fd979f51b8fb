import json
from pathlib import Path

import pytest

from yono.cli import main
from yono.config import SCHEMA, RunConfig, parse_override
from yono.errors import ConfigError
from yono.metrics import AccuracyMatrix, read_accuracy_table, read_summary_csv
from yono.prototypes import PrototypeMemory
from yono.synthesis import read_embedding_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = ["--set", "trainer.epochs=2", "--set", "data.samples_per_class=30", "--set", "trainer.hidden_dims=16",
         "--set", "trainer.embed_dim=4", "--set", "data.input_dim=6"]


def test_defaults_match_desk_profile():
    desk = dict(RunConfig.load(CONFIGS / "desk.toml").values)
    defaults = dict(RunConfig.load().values)
    assert desk.pop("run.out") == "runs/desk"
    defaults.pop("run.out")
    assert desk == defaults


def test_full_scale_profile_loads():
    cfg = RunConfig.load(CONFIGS / "full-scale.toml")
    t = cfg.trainer_config("yono+", 0)
    assert (t.epochs, t.batch_size, t.lr, t.lr_old) == (60, 256, 0.01, 0.001)


def test_toml_round_trip(tmp_path):
    cfg = RunConfig.load(overrides=["trainer.lr=0.003", "run.modes=yono,naive", "trainer.off=kd"])
    (tmp_path / "c.toml").write_text(cfg.to_toml())
    assert RunConfig.load(tmp_path / "c.toml") == cfg


@pytest.mark.parametrize(
    "text, key",
    [
        ("[trainer]\nepochz = 3\n", "trainer.epochz"),
        ("[trainer]\nepochs = 2.5\n", "trainer.epochs"),
        ("[trainer]\nlr = \"fast\"\n", "trainer.lr"),
        ("[stream]\nbase = \"third\"\n", "stream.base"),
        ("[run]\nmodes = [\"ewc\"]\n", "run.modes"),
        ("[trainer]\noff = [\"dropout\"]\n", "trainer.off"),
        ("[data]\nn_classes = 7\n", "data"),
    ],
)
def test_bad_config_names_key(tmp_path, text, key):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        RunConfig.load(p)


def test_override_coercion():
    assert parse_override("trainer.hidden_dims=[32, 8]") == ("trainer.hidden_dims", [32, 8])
    assert parse_override("trainer.beta=1") == ("trainer.beta", 1.0)
    assert parse_override("run.modes=yono,yono+") == ("run.modes", ["yono", "yono+"])
    with pytest.raises(ConfigError):
        parse_override("trainer.beta")
    assert all(k.count(".") == 1 for k in SCHEMA)


def test_missing_config_exits_2_with_path(tmp_path, capsys):
    path = tmp_path / "absent.toml"
    assert main(["run", "--config", str(path)]) == 2
    assert str(path) in capsys.readouterr().err


def test_unknown_override_exits_2(capsys):
    assert main(["run", "--set", "trainer.nope=1"]) == 2
    assert "trainer.nope" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["-q", "run", *SMALL, "--out", str(out)]) == 0
    assert (out / "run.json").exists() and (out / "accuracy.csv").exists()
    doc = json.loads((out / "run.json").read_text())
    assert len(doc["runs"]) == 1
    mode, seed, A = read_accuracy_table(out / "accuracy.csv")[0]
    assert (mode, seed) == ("yono+", 0)
    assert AccuracyMatrix.from_csv(out / "yono+-seed0" / "accuracy.csv").rows() == A.rows()
    assert len(PrototypeMemory.read(out / "yono+-seed0" / "memory.bin")) == 10


def test_seed_mode_product(tmp_path):
    out = tmp_path / "out"
    assert main(["-q", "run", *SMALL, "--seed", "1,2,3", "--mode", "yono,yono+", "--out", str(out)]) == 0
    rows = read_summary_csv(out / "metrics.csv")
    assert {(r["mode"], r["seed"]) for r in rows} == {(m, s) for m in ("yono", "yono+") for s in (1, 2, 3)}
    assert len(json.loads((out / "run.json").read_text())["runs"]) == 6


def test_run_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["-q", "run", *SMALL, "--mode", "yono", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "accuracy.csv").read_bytes() == (tmp_path / "b" / "accuracy.csv").read_bytes()


def test_parallel_matches_sequential(tmp_path):
    args = ["-q", "run", *SMALL, "--seed", "0,1"]
    assert main(args + ["--out", str(tmp_path / "s")]) == 0
    assert main(args + ["--out", str(tmp_path / "p"), "--parallel", "2"]) == 0
    assert (tmp_path / "s" / "accuracy.csv").read_bytes() == (tmp_path / "p" / "accuracy.csv").read_bytes()


def test_ablate(tmp_path):
    out = tmp_path / "ab"
    assert main(["-q", "ablate", *SMALL, "--off", "interpolation,no-prototype-replay", "--out", str(out)]) == 0
    rows = read_summary_csv(out / "ablation.csv")
    assert [r["ablation"] for r in rows] == ["full", "no-interpolation", "no-prototype-replay"]
    doc = json.loads((out / "run.json").read_text())
    assert doc["runs"][1]["config"]["off"] == ["interpolation"]
    assert main(["ablate", "--off", "dropout"]) == 2


def test_ablate_without_toggles_matches_run(tmp_path):
    assert main(["-q", "ablate", *SMALL, "--out", str(tmp_path / "ab")]) == 0
    assert main(["-q", "run", *SMALL, "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "ab" / "accuracy.csv").read_bytes() == (tmp_path / "run" / "accuracy.csv").read_bytes()


def test_dump_embeddings(tmp_path):
    out = tmp_path / "out"
    assert main(["-q", "run", *SMALL, "--out", str(out)]) == 0
    csv_path = tmp_path / "emb.csv"
    ckpt = out / "yono+-seed0" / "model.ckpt"
    assert main(["-q", "dump-embeddings", *SMALL, "--checkpoint", str(ckpt), "--output", str(csv_path),
                 "--per-class", "5"]) == 0
    dump = read_embedding_csv(csv_path)
    synthetic = [k for k, kind in zip(dump.class_ids, dump.kinds) if kind == "synthetic"]
    extracted = {k for k, kind in zip(dump.class_ids, dump.kinds) if kind == "extracted"}
    assert len(synthetic) == 50
    assert set(synthetic) == extracted == set(range(10))


def test_dump_embeddings_failures(tmp_path):
    assert main(["-q", "dump-embeddings", "--checkpoint", str(tmp_path / "none.ckpt"),
                 "--output", str(tmp_path / "x.csv")]) == 1
    out = tmp_path / "out"
    assert main(["-q", "run", *SMALL, "--out", str(out)]) == 0
    ckpt = out / "yono+-seed0" / "model.ckpt"
    # checkpoint trained on 6 features, dataset now has 32
    assert main(["-q", "dump-embeddings", "--checkpoint", str(ckpt), "--output", str(tmp_path / "x.csv")]) == 1

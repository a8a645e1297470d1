import json

import pytest

from distdp.harness.analyze import analyze, gossip_budget, load_dataset, preset_dataset, sdbp_budget
from distdp.harness.cli import main, preset_names
from distdp.harness.config import ExperimentConfig
from distdp.harness.runner import cmd_run
from distdp.mdp import ContractViolation


def _tiny(tmp_path, **kw):
    doc = dict(name="tiny", topologies=["ring", "star"], M=4,
               algorithms=["sdbp", "broadcast", "gossip", "async_sdbp", "sdbp_bandwidth"],
               seeds=[0, 1], budget=3000, B=128, D=2, output_dir=str(tmp_path / "out"))
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_config_round_trip(tmp_path):
    cfg = _tiny(tmp_path)
    path = tmp_path / "c.yaml"
    cfg.save(path)
    again = ExperimentConfig.load(path)
    assert again == cfg and again.digest() == cfg.digest()


@pytest.mark.parametrize("bad", [
    {"topologies": ["torus"]}, {"algorithms": ["pagerank"]}, {"gamma": 1.0},
    {"epsilon": 0.6}, {"delta": -1.0}, {"noise_mode": "loud"}, {"D": 0},
    {"B": 32}, {"seeds": []}, {"M": 10, "topologies": ["grid"]}, {"colour": "red"},
])
def test_config_validation(tmp_path, bad):
    with pytest.raises(ContractViolation):
        _tiny(tmp_path, **bad)


def test_malformed_yaml():
    with pytest.raises(ContractViolation):
        ExperimentConfig.from_yaml("M: [1, 2")
    with pytest.raises(ContractViolation):
        ExperimentConfig.from_yaml("- 1\n- 2\n")


def test_cmd_run_outputs_and_determinism(tmp_path):
    cfg = _tiny(tmp_path)
    res = cmd_run(cfg, tmp_path / "a", quiet=True)
    cmd_run(cfg, tmp_path / "b", quiet=True)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 2 * 5 * 2 * 2 + 3
    for f in files:
        if f.name != "manifest.json":
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.digest() and manifest["seeds"] == [0, 1]
    rows = {r["topology"]: r for r in res["rows"]}
    assert rows["ring"]["sdbp_mean"] == rows["ring"]["broadcast_mean"]
    assert "| ring |" in res["markdown"]


def test_budgets():
    assert sdbp_budget(0.95, 0.01) > 0
    assert gossip_budget(0.95, 0.01, 0.1) < gossip_budget(0.95, 0.01, 0.01)


def test_analyze_star_note():
    data = preset_dataset("star", 64, 0.95)
    rep = analyze(data, 0.95, 0.01)
    assert rep["phi_graph_volume"] == 1.0
    assert any("Cheeger" in n or "conductance" in n for n in rep.get("notes", []))


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--list-presets"]) == 0
    assert "smoke" in capsys.readouterr().out
    assert main(["run", "--preset", "smoke", "--M", "9", "--dump-config"]) == 0
    assert "M: 9" in capsys.readouterr().out
    assert main(["run", "--preset", "nope"]) == 2
    assert main(["run", "--gamma", "1.5", "--dump-config"]) == 2
    assert main(["analyze"]) == 2
    assert main(["analyze", "--topology", "ring", "--M", "16", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["diameter"] == 8
    out = tmp_path / "inst"
    assert main(["gen", "topology", "--topology", "grid", "--M", "9", "--out", str(out)]) == 0
    mdp, data = load_dataset(out / "grid_M9_seed0.mdp.json", out / "grid_M9_seed0.partition")
    assert data.n_machines == 9 and mdp.n_states == 36
    assert main(["analyze", "--mdp", str(out / "grid_M9_seed0.mdp.json"),
                 "--partition", str(out / "grid_M9_seed0.partition")]) == 0
    assert main(["analyze", "--mdp", str(out / "missing.json"),
                 "--partition", str(out / "grid_M9_seed0.partition")]) == 2
    for kind in ("chain_pair", "path_family", "fed_tree"):
        assert main(["gen", kind, "--out", str(out), "--m", "3", "--bits", "101"]) == 0


def test_cli_verify_suite_passes(capsys):
    assert main(["verify", "async"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_presets_load():
    from distdp.harness.cli import load_preset
    for name in preset_names():
        load_preset(name).validate()

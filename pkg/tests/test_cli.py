import filecmp
import hashlib
import json

import pytest
import yaml

from obslab.cli.config import PRESETS, load_config, preset
from obslab.cli.main import EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, main, run
from obslab.cli.output import PARTIAL_MARKER
from obslab.errors import ConfigError

SMALL = {
    "name": "small_product",
    "commands": ["pomega", "observability", "decompose"],
    "system": {"family": "ProductHalving"},
    "ensemble": {"size": 100, "seed": 11, "n_max": 5000},
    "analysis": {"n_orbits": 2, "attraction_records": 1,
                 "references": [{"name": "mid", "kind": "dirac", "point": [0.0, 0.5]}]},
}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_presets_validate():
    for name in PRESETS:
        cfg = preset(name)
        assert cfg.name == name and cfg.commands


def test_gallery_list(capsys):
    assert main(["gallery", "--list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out
    assert "expected:" in out


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d.update(bogus=1), "bogus"),
    (lambda d: d.update(system={"family": "LinearExpanding", "params": {"d": 1.5}}), "integer"),
    (lambda d: d["system"].update(params={"zeta": 2}), "zeta"),
    (lambda d: d["ensemble"].update(size=10), "ensemble.size"),
    (lambda d: d["analysis"].update(epsilons=[0.1, -1]), "epsilons"),
    (lambda d: d["analysis"]["references"].append({"name": "x", "kind": "dirac"}), "point"),
    (lambda d: d.update(commands=["equilibrium"]), "expanding circle map"),
])
def test_config_errors_exit_2(tmp_path, capsys, mutate, needle):
    data = json.loads(json.dumps(SMALL))
    mutate(data)
    path = write_cfg(tmp_path, data)
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["pomega", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unreadable_config_exit_2(tmp_path):
    assert main(["pomega", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: [unclosed\n")
    assert main(["pomega", "--config", str(bad)]) == EXIT_CONFIG


def test_equilibrium_on_non_expanding_preset_exit_2():
    assert main(["equilibrium", "--preset", "product_halving"]) == EXIT_CONFIG


def test_compute_error_exit_3(tmp_path, capsys):
    # entropy order 12 needs ~10 * 2^13 symbols; a 2000-step orbit is too short
    data = {"name": "short", "commands": ["equilibrium"],
            "system": {"family": "LinearExpanding", "params": {"d": 2}},
            "ensemble": {"size": 100, "seed": 1, "n_max": 2000},
            "analysis": {"entropy_order": 12}}
    out = tmp_path / "o"
    assert main(["gallery", "--config", write_cfg(tmp_path, data), "--out", str(out)]) == EXIT_COMPUTE
    assert "Undersampled" in capsys.readouterr().err
    assert (out / PARTIAL_MARKER).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "partial" and man["error"]


def test_outputs_are_stamped_and_manifested(tmp_path):
    out = tmp_path / "o"
    assert main(["gallery", "--config", write_cfg(tmp_path, SMALL), "--out", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    h = man["config_hash"]
    assert man["status"] == "complete" and "timestamp" not in json.dumps(man)
    names = {e["file"] for e in man["files"]}
    for need in ("pomega.json", "pomega_trace.png", "observability.json", "observability.png",
                 "decomposition.json", "decomposition.png", "observability_mid.csv"):
        assert need in names
    for e in man["files"]:
        data = (out / e["file"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == e["sha256"]
        if e["file"].endswith(".csv"):
            assert data.decode().splitlines()[0] == f"# manifest: {h}"
        elif e["file"].endswith(".json"):
            assert json.loads(data)["manifest"] == h
        elif e["file"].endswith(".png"):
            assert h.encode() in data
        elif e["file"].endswith(".txt"):
            assert f"# manifest: {h}" in data.decode()
    dec = json.loads((out / "decomposition.json").read_text())
    assert dec["verdicts"]["verdict"] == "cover-without-physical"


def test_reports_identical_across_workers(tmp_path):
    cfg = load_config(write_cfg(tmp_path, SMALL))
    dirs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        assert run(cfg, list(cfg.commands), str(d), workers=w) == EXIT_OK
        dirs.append(d)
    cmp = filecmp.dircmp(dirs[0], dirs[1])
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in cmp.common_files:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

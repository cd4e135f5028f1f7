import json

import numpy as np
import pytest

from conecert.catalog import block_sum_system, full_matrix_system
from conecert.cli import REVERIFIERS, main
from conecert.config import RunConfig, load_config, parse_config_text
from conecert.partition import random_partition_instance, solve_partition
from conecert.store import CertificateStore, StoreError, canonical_json, content_key
from conecert.tensors import TensorElement


# ---------------------------------------------------------------------------
# config


def test_config_defaults_are_positive():
    cfg = RunConfig()
    d = cfg.to_dict()
    for name in ("tol_psd", "tol_feas", "tol_cert", "rank_cutoff"):
        assert d[name] > 0
    assert all(e > 0 for e in d["eps_schedule"])


def test_config_parse_text():
    text = """
    # comment line
    tol_cert = 1e-6
    samples = 3   # trailing comment
    eps_schedule = 1e-2, 1e-4
    """
    raw = parse_config_text(text)
    assert raw == {"tol_cert": "1e-6", "samples": "3", "eps_schedule": "1e-2, 1e-4"}
    with pytest.raises(ValueError):
        parse_config_text("this line has no equals sign")


def test_config_load_file_and_env(tmp_path, monkeypatch):
    p = tmp_path / "run.cfg"
    p.write_text("tol_cert = 1e-6\nseed = 9\nout_dir = somewhere\neps_schedule=1e-3,1e-5\n")
    cfg = load_config(str(p))
    assert cfg.tol_cert == 1e-6
    assert cfg.seed == 9
    assert cfg.out_dir == "somewhere"
    assert cfg.eps_schedule == [1e-3, 1e-5]

    monkeypatch.setenv("CONECERT_CONFIG", str(p))
    assert load_config().seed == 9
    monkeypatch.delenv("CONECERT_CONFIG")
    assert load_config().seed == 0


def test_config_rejects_bad_values(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("tol_psd = -1\n")
    with pytest.raises(ValueError):
        load_config(str(bad))
    bad.write_text("no_such_knob = 1\n")
    with pytest.raises(ValueError):
        load_config(str(bad))


# ---------------------------------------------------------------------------
# store


def test_store_roundtrip_and_idempotence(tmp_path):
    store = CertificateStore(tmp_path / "art")
    obj = {"b": [1, 2], "a": "x"}
    k1 = store.put("thing", obj)
    k2 = store.put("thing", {"a": "x", "b": [1, 2]})  # same content, other order
    assert k1 == k2 == content_key(obj)
    assert store.get("thing", k1) == obj
    assert store.keys("thing") == [k1]
    with pytest.raises(StoreError):
        store.get("thing", "0" * 64)


def test_store_detects_corruption(tmp_path):
    store = CertificateStore(tmp_path / "art")
    key = store.put("thing", {"v": 1})
    path = store.path("thing", key)
    text = path.read_text()
    path.write_text(text.replace("1", "2"))
    with pytest.raises(StoreError, match="corrupt"):
        store.get("thing", key)


def test_store_verifier_hook(tmp_path):
    store = CertificateStore(tmp_path / "art")
    key = store.put("thing", {"v": 1})
    assert store.get("thing", key, verifier=lambda o: o["v"] == 1) == {"v": 1}
    with pytest.raises(StoreError, match="re-verification"):
        store.get("thing", key, verifier=lambda o: False)


def test_canonical_json_is_sorted():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


# ---------------------------------------------------------------------------
# command line


def _element_file(tmp_path, u, name):
    p = tmp_path / name
    p.write_text(json.dumps(u.to_json_obj()))
    return str(p)


def test_catalog_info_dimensions(capsys):
    for name, dim in (("W:2,2", 3), ("E:3", 7), ("F:2", 15)):
        assert main(["catalog", "info", name]) == 0
        out = capsys.readouterr().out
        assert f"dim: {dim}" in out
    assert main(["catalog", "list"]) == 0
    assert "W:n,k" in capsys.readouterr().out


def test_catalog_unknown_name_is_usage_error(capsys):
    assert main(["catalog", "info", "Zork:9"]) == 1
    assert "error" in capsys.readouterr().err


def test_cone_min_and_max_inner_unit(tmp_path, capsys):
    u = TensorElement.unit(block_sum_system(2, 2), full_matrix_system(2))
    f = _element_file(tmp_path, u, "unit.json")
    art = str(tmp_path / "art")

    assert main(["--out", art, "cone", f, "--mode", "min"]) == 0
    out = capsys.readouterr().out
    assert "verdict: positive" in out

    assert main(["--out", art, "cone", f, "--mode", "max-inner"]) == 0
    out = capsys.readouterr().out
    assert "verdict: certified" in out

    store = CertificateStore(art)
    for key in store.keys("cone"):
        store.get("cone", key, verifier=REVERIFIERS["cone"])


def test_cone_outer_refutes_non_positive(tmp_path, capsys):
    left = block_sum_system(2, 2)
    right = full_matrix_system(2)
    c = np.zeros((left.dim, right.dim), dtype=complex)
    c[0, :] = right.coords(right.unit)
    c[1, :] = 2.0 * right.coords(right.unit)  # 1 + 2 w_1 dips negative
    u = TensorElement(left, right, c)
    f = _element_file(tmp_path, u, "bad.json")
    art = str(tmp_path / "art")

    assert main(["--out", art, "cone", f, "--mode", "max-outer"]) == 0
    assert "refuted(1)" in capsys.readouterr().out

    store = CertificateStore(art)
    (key,) = store.keys("cone")
    store.get("cone", key, verifier=REVERIFIERS["cone"])


def test_cone_outer_undecided_on_unit(tmp_path, capsys):
    u = TensorElement.unit(block_sum_system(2, 2), full_matrix_system(2))
    f = _element_file(tmp_path, u, "unit.json")
    code = main(["--out", str(tmp_path / "art"), "cone", f, "--mode", "max-outer"])
    assert code == 2
    assert "undecided" in capsys.readouterr().out


def test_pou_solve_random_replays_identically(tmp_path, capsys):
    art = str(tmp_path / "art")
    args = ["--out", art, "pou", "solve", "--random", "--m", "2", "--dims", "3", "--seed", "7"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    second = capsys.readouterr().out
    assert first == second  # same artifact path: byte-identical replay
    store = CertificateStore(art)
    (key,) = store.keys("pou")
    store.get("pou", key, verifier=REVERIFIERS["pou"])


def test_pou_verify_valid_and_mismatched(tmp_path, capsys):
    rng = np.random.default_rng(3)
    inst = random_partition_instance(rng, 2, [2], margin=0.2)
    cert = solve_partition(inst)
    other = random_partition_instance(rng, 2, [2], margin=0.2)

    inst_p = tmp_path / "inst.json"
    cert_p = tmp_path / "cert.json"
    other_p = tmp_path / "other.json"
    inst_p.write_text(json.dumps(inst.to_json_obj()))
    cert_p.write_text(json.dumps(cert.to_json_obj()))
    other_p.write_text(json.dumps(other.to_json_obj()))

    assert main(["pou", "verify", str(inst_p), str(cert_p)]) == 0
    assert "verdict: valid" in capsys.readouterr().out

    assert main(["pou", "verify", str(other_p), str(cert_p)]) == 0
    out = capsys.readouterr().out
    assert "invalid" in out and "reconstruction" in out


def test_pou_solve_from_instance_file(tmp_path, capsys):
    rng = np.random.default_rng(12)
    inst = random_partition_instance(rng, 3, [2, 1], margin=0.2)
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(inst.to_json_obj()))
    assert main(["--out", str(tmp_path / "art"), "pou", "solve", str(p)]) == 0
    assert "verdict: valid" in capsys.readouterr().out


def test_pou_tampered_artifact_fails_reverify(tmp_path):
    art = str(tmp_path / "art")
    assert main(["--out", art, "pou", "solve", "--random", "--m", "1", "--dims", "2", "--seed", "1"]) == 0
    store = CertificateStore(art)
    (key,) = store.keys("pou")
    obj = store.get("pou", key)
    obj["certificate"]["c"][0][0][0][0] += 0.5  # bend one real entry
    key2 = store.put("pou", obj)
    with pytest.raises(StoreError, match="re-verification"):
        store.get("pou", key2, verifier=REVERIFIERS["pou"])


def test_probe_cli_runs_and_reverifies(tmp_path, capsys):
    art = str(tmp_path / "art")
    code = main(
        ["--out", art, "probe", "W:2,2", "Mat:2", "--levels", "1", "--samples", "2", "--seed", "4"]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "certified: 2" in out
    store = CertificateStore(art)
    (key,) = store.keys("probe")
    store.get("probe", key, verifier=REVERIFIERS["probe"])


def test_probe_bad_pair_is_usage_error(capsys):
    assert main(["probe", "W:9", "Mat:2"]) == 1
    capsys.readouterr()


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage error" in capsys.readouterr().err


def test_cone_missing_file_is_error(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "cone", str(tmp_path / "nope.json"), "--mode", "min"])
    assert code == 1
    assert "error" in capsys.readouterr().err

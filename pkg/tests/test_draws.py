import json

import numpy as np
import pytest

from zisv.draws import DrawCollector, DrawStore, Schedule, blob_hash
from zisv.exceptions import ConfigError


def test_default_schedule_keeps_500():
    s = Schedule()
    kept = [it for it in range(s.n_iter) if s.keep(it)]
    assert len(kept) == s.n_draws == 500
    assert kept[0] == 2019 and kept[-1] == 11999


@pytest.mark.parametrize("args", [(0, 0, 1), (10, 10, 1), (10, -1, 1), (10, 2, 0)])
def test_bad_schedules(args):
    with pytest.raises(ConfigError):
        Schedule(*args)


def test_blob_hash_matches_git(tmp_path):
    p = tmp_path / "x.txt"
    p.write_bytes(b"hello\n")
    assert blob_hash(p) == "ce013625030ba8dba906f756967f9e9ca394464a"


def _store(model, K, rng):
    T, n = 4, 3
    arrays = {"theta": rng.normal(size=(n, T + 1, K)), "h": rng.normal(size=(n, T + 1, K)),
              "pi": rng.normal(size=(n, T + 1, K)), "ystar": rng.normal(size=(n, T, K)),
              "sigma2_theta": rng.random((n, K)), "sigma2_h": rng.random((n, K))}
    if model == "zmucsv":
        arrays["C"] = rng.normal(size=(n, K, K))
        arrays["Sigma_pi"] = rng.random((n, K, K))
    else:
        arrays["sigma2_pi"] = rng.random((n, K))
    names = tuple(f"s{k}" for k in range(K))
    return DrawStore(model, arrays, np.array([5, 7, 9]), names, tuple(f"t{t}" for t in range(T)),
                     np.arange(1.0, K + 1), {"seed": 3})


@pytest.mark.parametrize("model,K", [("zucsv", 1), ("zucsv", 2), ("zmucsv", 2)])
def test_csv_manifest_round_trip(tmp_path, model, K):
    st = _store(model, K, np.random.default_rng(K))
    st.write(tmp_path, "d")
    back = DrawStore.read(tmp_path, "d")
    assert back.equals(st)
    assert back.series_names == st.series_names and back.time_labels == st.time_labels
    assert np.array_equal(back.scale_factors, st.scale_factors)
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == ("iter,block,name,series,t_index,value" if K > 1 or model == "zmucsv"
                      else "iter,block,name,t_index,value")
    man = json.loads((tmp_path / "d.manifest.json").read_text())
    assert man["seed"] == 3 and man["n_draws"] == 3


def test_csv_rows_are_labelled_by_block(tmp_path):
    st = _store("zmucsv", 2, np.random.default_rng(0))
    st.write(tmp_path, "d")
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert any(r.startswith('5,C,"C[1,2]",,,') for r in rows)
    assert any(r.startswith("5,ystar,ystar,s0,1,") for r in rows)
    assert any(r.startswith("5,trend,theta,s1,0,") for r in rows)


def test_collector_respects_schedule():
    c = DrawCollector(Schedule(10, 4, 3), {"x": (2,)})
    for it in range(10):
        c.offer(it, {"x": np.full(2, it)})
    st = c.finish("zucsv")
    assert st.iterations.tolist() == [6, 9]
    assert st["x"][:, 0].tolist() == [6, 9]

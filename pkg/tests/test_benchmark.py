import json

import pytest

from ffsrm.benchmark import (CSV_COLUMNS, BenchmarkSpec, derive_seeds, expand_grid,
                             read_benchmark_csv, run_benchmark)
from ffsrm.config import parse_config


def _spec(tmp, **kw):
    base = dict(sample="two_point", methods={"widefield": {}, "sofi": {"order": [2, 3]}},
                frame_counts=(20,), presets=("high",), seeds=(0,), output_dir=str(tmp),
                sample_options={"separation_nm": 300.0})
    base.update(kw)
    return BenchmarkSpec(**base)


def test_empty_methods_rejected(tmp_path):
    with pytest.raises(ValueError, match="at least one method"):
        _spec(tmp_path, methods={})
    with pytest.raises(ValueError, match="unknown method"):
        _spec(tmp_path, methods={"palm": {}})
    with pytest.raises(ValueError):
        _spec(tmp_path, methods={"sofi": {"order": [9]}})
    with pytest.raises(ValueError, match="custom"):
        _spec(tmp_path, presets=("custom",))


def test_expand_grid_and_seeds():
    assert expand_grid({"b": [1, 2], "a": 3}) == [{"a": 3, "b": 1}, {"a": 3, "b": 2}]
    assert expand_grid({}) == [{}]
    assert derive_seeds(5) == derive_seeds(5) and len(set(derive_seeds(5))) == 3


def _strip_timing(path):
    rows = read_benchmark_csv(path)
    for r in rows:
        r.pop("wall_time_s")
    return rows


def test_deterministic_outputs(tmp_path):
    a = run_benchmark(_spec(tmp_path / "a"))
    b = run_benchmark(_spec(tmp_path / "b"))
    assert _strip_timing(a / "benchmark.csv") == _strip_timing(b / "benchmark.csv")
    tifs = sorted(p.relative_to(a) for p in a.rglob("*.tif"))
    assert len(tifs) == 3
    for rel in tifs:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    truth = sorted(p.relative_to(a) for p in (a / "truth").glob("*.csv"))
    for rel in truth:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_csv_schema_and_summary(tmp_path):
    out = run_benchmark(_spec(tmp_path, hawk_levels=(0, 3),
                              methods={"widefield": {}, "sacd": {"magnification": [2]}}))
    rows = read_benchmark_csv(out / "benchmark.csv")
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert all(r["probe"] == "pair" for r in rows if r["status"] == "ok")
    cells = {r["cell_id"] for r in rows}
    assert not any("-h3-sacd" in c for c in cells)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["excluded"] and summary["n_cells"] == len(cells)


def test_failure_recorded_not_raised(tmp_path):
    # 4 frames is below the order-3 SOFI minimum; the cell fails, others complete
    out = run_benchmark(_spec(tmp_path, frame_counts=(4,),
                              methods={"widefield": {}, "sofi": {"order": [3]}}))
    rows = read_benchmark_csv(out / "benchmark.csv")
    status = {r["method"]: r["status"] for r in rows}
    assert status == {"widefield": "ok", "sofi": "failed"}
    assert "needs" in next(r["error"] for r in rows if r["method"] == "sofi")


def test_from_config(tmp_path):
    cfg = parse_config(f"sample = two_point\nframes = 12\nmethods = esi\nesi.order = 2, 4\n"
                       f"separation_nm = 250\noutput = {tmp_path}\n")
    spec = BenchmarkSpec.from_config(cfg)
    assert spec.methods == {"esi": {"order": [2, 4]}}
    assert spec.sample_options == {"separation_nm": 250.0}
    assert spec.frame_counts == (12,)

import pytest

from hybridsim.parallel import ENV_THREADS, chunk_bounds, map_chunks, resolve_threads


def test_env_overrides_argument(monkeypatch):
    monkeypatch.setenv(ENV_THREADS, "3")
    assert resolve_threads(8) == 3
    monkeypatch.setenv(ENV_THREADS, "zero")
    with pytest.raises(ValueError):
        resolve_threads(2)


def test_argument_then_cores(monkeypatch):
    monkeypatch.delenv(ENV_THREADS, raising=False)
    assert resolve_threads(5) == 5
    assert resolve_threads(None) >= 1


def test_chunks_cover_range_in_order():
    assert chunk_bounds(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert chunk_bounds(0, 4) == []
    assert map_chunks(lambda a, b: list(range(a, b)), 10, 3, threads=4) == [[0, 1, 2], [3, 4, 5], [6, 7, 8], [9]]

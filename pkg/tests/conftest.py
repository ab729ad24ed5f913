"""Pytest configuration file."""

import pytest


def pytest_configure(config):
    """Register asyncio marker."""
    config.addinivalue_line("markers", "asyncio: mark test as an asyncio coroutine")


@pytest.fixture(autouse=True)
def _isolated_runs_root(monkeypatch, tmp_path):
    """Keep a developer's LONGFORM_MQM_RUNS out of the server tests."""
    monkeypatch.setenv("LONGFORM_MQM_RUNS", str(tmp_path / "runs"))

"""Shared pytest configuration."""

# external
import pytest


def pytest_addoption(parser: pytest.Parser):
    """Add `--run-slow`."""
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run the n = 1000 paired runs"
    )


def pytest_configure(config: pytest.Config):
    """Register markers."""
    config.addinivalue_line(
        "markers",
        "slow: Paired simulations at n = 1000, skipped unless --run-slow is given",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: "list[pytest.Item]"):
    """Skip slow tests by default."""
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)

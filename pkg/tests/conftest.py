from __future__ import annotations

import pytest

from fedbridge.config import config_from_dict
from fedbridge.messages import EntityId
from fedbridge.scenarios import build_demo_config
from fedbridge.signing import generate_keypair


@pytest.fixture
def idp_keys():
    return generate_keypair("idp-signing", EntityId("https://idp.example.test"))


@pytest.fixture
def broker_keys():
    return generate_keypair("broker-signing", EntityId("https://broker.example.test"))


@pytest.fixture
def demo_cfg_dict(tmp_path):
    return build_demo_config(tmp_path)


@pytest.fixture
def demo_cfg(demo_cfg_dict, tmp_path):
    return config_from_dict(demo_cfg_dict, base_dir=tmp_path)


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.rsplit("::", 1)[-1]
        print(f"\n[acceptance] {name}: {'PASS' if report.passed else 'FAIL'}")

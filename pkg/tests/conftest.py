"""Shared fixtures: cached synthetic corpora and the acceptance-criterion recorder."""

from __future__ import annotations

import copy

import pytest

from crowdmodal import pipeline
from crowdmodal.aggregation import aggregate
from crowdmodal.config import load_config, resolve

_CORPORA = {}
_CRITERIA = []


def build_corpus(source, overrides=None):
    """``(cfg, {lane: [maps in plan order]})`` for a preset or config dict, cached per session."""
    key = (source if isinstance(source, str) else repr(sorted(source.items())), repr(overrides))
    if key not in _CORPORA:
        cfg = load_config(source) if isinstance(source, str) else resolve(source)
        if overrides:
            cfg = resolve(_deep(cfg, overrides))
        by_lane = {}
        for _, m in pipeline.simulate_maps(cfg):
            by_lane.setdefault(m.lane, []).append(m)
        _CORPORA[key] = (cfg, by_lane)
    return _CORPORA[key]


def _deep(cfg, overrides):
    out = copy.deepcopy(cfg)
    for path, value in overrides.items():
        node = out
        *head, last = path.split(".")
        for h in head:
            node = node[h]
        node[last] = value
    return out


def identify_corpus(source, overrides=None):
    """Report of the in-memory pipeline for a corpus."""
    cfg, by_lane = build_corpus(source, overrides)
    aggs = {y: aggregate(ms) for y, ms in by_lane.items()}
    report, estimates, extras = pipeline.identify(cfg, aggs)
    return report


@pytest.fixture(scope="session")
def corpus():
    return build_corpus


@pytest.fixture(scope="session")
def corpus_report():
    return identify_corpus


class CriterionLog:
    def record(self, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

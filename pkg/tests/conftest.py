import numpy as np
import pytest

from aggbatch.datagen import db_tiny, favorita
from aggbatch.engine import EngineSession
from aggbatch.queries import define_query


@pytest.fixture
def tiny():
    """Two-relation toy database with its QA/QB/QC batch."""
    return db_tiny().build()


@pytest.fixture
def retail():
    """Six-relation retail-shaped database with the Q1/Q2/Q3 demo batch."""
    return favorita().build()


def trace_batch(catalog, tree):
    """The three-query configuration whose Sales plan is checked line by line:
    same joins as the demo batch, but Q3 sums units alone."""
    return [
        define_query(catalog, tree, "Q1", [], [[("units", "identity")]]),
        define_query(catalog, tree, "Q2", ["store"], [[("item", "g"), ("date", "h")]]),
        define_query(catalog, tree, "Q3", ["class"], [[("units", "identity")]]),
    ]


def trace_session():
    catalog, tree, _ = favorita().build()
    return EngineSession(catalog, tree, trace_batch(catalog, tree))


def relative_close(want: np.ndarray, got: np.ndarray, tol: float = 1e-9) -> bool:
    want = np.asarray(want, dtype=float)
    got = np.asarray(got, dtype=float)
    return bool((np.abs(want - got) <= tol * np.maximum(1.0, np.abs(want))).all())

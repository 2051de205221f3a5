import dataclasses

import numpy as np
import pytest

from videstep import (
    IndexOutOfRange,
    Mesh,
    Method,
    NonPositiveStep,
    NonTilingStep,
    StepDiagnostics,
    VideProblem,
    make_mesh,
)


def test_make_mesh_counts_steps():
    mesh = make_mesh(0.0, 5.0, 5e-3)
    assert mesh.n_steps == 1000
    assert mesh.x0 == 0.0
    assert mesh.xf == 5.0


def test_make_mesh_accepts_inexact_tiling():
    # 0.1 is not representable in binary; the relative tolerance must absorb it
    mesh = make_mesh(0.0, 1.0, 0.1)
    assert mesh.n_steps == 10


def test_make_mesh_shifted_origin():
    mesh = make_mesh(1.0, 3.0, 0.25)
    assert mesh.n_steps == 8
    assert mesh.node(0) == 1.0
    assert mesh.node(8) == pytest.approx(3.0)


@pytest.mark.parametrize("h", [0.0, -0.1])
def test_make_mesh_rejects_nonpositive_step(h):
    with pytest.raises(NonPositiveStep):
        make_mesh(0.0, 1.0, h)


@pytest.mark.parametrize("x0,xf", [(1.0, 1.0), (2.0, 1.0)])
def test_make_mesh_rejects_empty_interval(x0, xf):
    with pytest.raises(NonPositiveStep):
        make_mesh(x0, xf, 0.1)


def test_make_mesh_rejects_nontiling_step():
    with pytest.raises(NonTilingStep):
        make_mesh(0.0, 1.0, 0.3)


def test_make_mesh_rejects_step_larger_than_interval():
    with pytest.raises(NonTilingStep):
        make_mesh(0.0, 1.0, 3.0)


def test_nodes_are_multiplicative_not_cumulative():
    # x_i = x0 + i*h exactly; repeated addition of 0.1 would drift
    mesh = make_mesh(0.0, 100.0, 0.1)
    nodes = mesh.nodes()
    assert nodes.size == 1001
    assert nodes[-1] == pytest.approx(100.0, abs=1e-12)
    i = 700
    assert mesh.node(i) == 0.0 + i * 0.1


def test_node_index_bounds():
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(IndexOutOfRange):
        mesh.node(-1)
    with pytest.raises(IndexOutOfRange):
        mesh.node(11)


def test_mesh_is_frozen():
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(dataclasses.FrozenInstanceError):
        mesh.h = 0.2


def test_problem_is_frozen():
    problem = VideProblem(f=lambda x, y: -y, kernel=lambda x, y, t: 0.0, y0=1.0)
    with pytest.raises(dataclasses.FrozenInstanceError):
        problem.y0 = 2.0
    assert problem.f_y is None
    assert problem.exact is None


def test_method_enum_values():
    assert Method.EXPLICIT.value == "explicit"
    assert Method.IMPLICIT.value == "implicit"
    assert Method("implicit") is Method.IMPLICIT


def test_step_diagnostics_fields():
    diag = StepDiagnostics(iterations=2, last_residual=1e-15)
    assert diag.iterations == 2
    assert diag.last_residual == 1e-15

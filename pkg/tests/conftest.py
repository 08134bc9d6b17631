import pytest

from fvdd import driftdiff, mesh


@pytest.fixture(scope="session")
def pn_geometry():
    return driftdiff.pn_junction(1.0, 1.0, 0.0, 1.0).boundary


@pytest.fixture(scope="session")
def distorted_quads():
    return mesh.distort_quads(mesh.build_cartesian(5, 5), 0.3, 7)


@pytest.fixture(scope="session")
def symmetric_case(pn_geometry):
    """Neutral device: zero doping, unit contact densities, zero potential."""
    trace = driftdiff.DirichletTrace(1.0, 1.0, 0.0)
    return driftdiff.CaseSpec(
        lam=1.0, alpha_n=0.0, alpha_p=0.0,
        doping=lambda x, y: 0.0,
        dirichlet={0: trace, 1: trace},
        n_init=lambda x, y: 1.0,
        p_init=lambda x, y: 1.0,
        boundary=pn_geometry,
    )

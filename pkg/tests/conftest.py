from __future__ import annotations

import pytest

from pcs_phases.config import ModeConfig
from pcs_phases.fock import enumerate_basis


@pytest.fixture
def basis_for():
    def build(m: int, n_max: int):
        return enumerate_basis(ModeConfig(m=m, n_max=n_max))

    return build

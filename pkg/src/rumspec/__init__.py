"""Rigid unit mode spectra, factor periodic flexes and free flex bases of crystal frameworks."""

from .framework import (
    CrystalFramework,
    Edge,
    ExplicitField,
    FactorField,
    FinitePatch,
    FrameworkError,
    Motif,
    PeriodLattice,
    cube,
    generate_patch,
    rigid_motion_flexes,
    rigidity_matrix,
    supercell,
    verify_flex,
)
from .laurent import LaurentMatrix, LaurentPoly
from .symbol import assemble_transfer_function, evaluate, psi_at_inverse, symbolic_determinant

__version__ = "0.1.0"

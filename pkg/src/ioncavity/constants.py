"""Physical constants (CODATA 2018, via scipy.constants).

Every module imports from here so there is exactly one definition.
"""
import scipy.constants as _sc

EPSILON_0 = _sc.epsilon_0
HBAR = _sc.hbar
C = _sc.c
AMU = _sc.atomic_mass
E_CHARGE = _sc.e
K_B = _sc.k
TWO_PI = 2.0 * _sc.pi

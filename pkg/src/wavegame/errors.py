"""Exception hierarchy for the package.

Every numerical or model failure raises a subclass of :class:`WaveGameError`
so the CLI can map them uniformly to exit code 1 (config problems map to
:class:`ConfigError` and exit code 2).
"""


class WaveGameError(Exception):
    """Base class for all package-specific failures."""


# --- numerics ---------------------------------------------------------------


class MaxStepsExceeded(WaveGameError):
    """The integrator hit its step budget before finishing the span."""


class EventNotBracketed(WaveGameError):
    """A requested terminal event never fired within the integration span."""


class NoBracket(WaveGameError):
    """Root finding was asked to work on a bracket without a sign change."""


class QuadratureFailed(WaveGameError):
    """Adaptive quadrature could not meet its tolerance."""


# --- phase plane ------------------------------------------------------------


class InvalidEta(WaveGameError):
    """Intermediate root outside (0, 1)."""


class ComplexEigenvalues(WaveGameError):
    """Linearisation has complex eigenvalues (possible only at the middle equilibrium)."""


class SeedTooLarge(WaveGameError):
    """Manifold seed violates the invariant-region containment beyond tolerance."""


class SeedBranchWrong(WaveGameError):
    """Stable-manifold seed landed on the wrong branch (slope not positive)."""


# --- wave builder -----------------------------------------------------------


class SpeedTooLarge(WaveGameError):
    """No departure point exists: the requested slope exceeds the manifold's."""


class NegativeDensity(WaveGameError):
    """Constructed harvesting density dips below zero beyond numerical dust."""


class NoLanding(WaveGameError):
    """The requested slope exceeds the stable manifold's slope everywhere."""


class NoPeriodicOrbit(WaveGameError):
    """No matching pair of spiral crossings exists at this (lambda, c)."""


class NoExtinctionSpeed(WaveGameError):
    """The movement cost exceeds the manifold amplitude on the whole scan box."""


# --- control ----------------------------------------------------------------


class NonConvexLagrangian(WaveGameError):
    """Derivative of the movement cost fails monotonicity on the test grid."""


class NoConvergence(WaveGameError):
    """Value iteration failed to contract below tolerance within the budget."""


class BlowUp(WaveGameError):
    """A controlled trajectory escaped to an absurd abscissa."""


class UnboundedCurvature(WaveGameError):
    """Second-derivative estimation of the profile failed."""


class NoCrossing(WaveGameError):
    """A requested level/graph crossing does not exist on the window."""


# --- pde --------------------------------------------------------------------


class CFLViolation(WaveGameError):
    """Explicit diffusion step requested with dt > dx^2/2."""


class FrontLeftDomain(WaveGameError):
    """The tracked front left the computational window (or came too close)."""


# --- cooperation ------------------------------------------------------------


class InvasionFailed(WaveGameError):
    """Recovery level was not reached on the harvesters' support before the cap."""


# --- cli --------------------------------------------------------------------


class ConfigError(WaveGameError):
    """Unusable experiment configuration."""

"""Exception taxonomy for the proctoring pipeline.

Every domain error derives from ProctorKitError so callers can catch the
whole family at the CLI boundary while tests assert on specific types.
"""


class ProctorKitError(Exception):
    """Base class for all domain errors raised by this package."""


# --- record ingestion ---

class MalformedRecord(ProctorKitError):
    """A stream line is not parseable as a frame record."""


class SchemaViolation(ProctorKitError):
    """A parsed record violates a declared field invariant."""


class OrderViolation(ProctorKitError):
    """Frame indices in a session stream are not strictly increasing."""


# --- geometry ---

class DegenerateInput(ProctorKitError):
    """Too few or rank-deficient points for a pose solve."""


class NonFiniteInput(ProctorKitError):
    """NaN or inf encountered where finite values are required."""


class NotARotation(ProctorKitError):
    """Matrix is not orthonormal with determinant +1."""


class DegenerateEye(ProctorKitError):
    """Eye corner landmarks coincide; gaze ratio undefined."""


class TooFewPoints(ProctorKitError):
    """Polygon has fewer than three vertices."""


class NotNormalized(ProctorKitError):
    """Embedding vector is not L2-normalized."""


class DimensionMismatch(ProctorKitError):
    """Vectors have incompatible lengths."""


# --- feature pipeline ---

class SchemaMismatch(ProctorKitError):
    """Feature vector length or version differs from the active schema."""


class AllMissingFeature(ProctorKitError):
    """A feature column has no observed value to impute from."""


class EmptyInput(ProctorKitError):
    """An operation requiring at least one row received none."""


class MissingLabel(ProctorKitError):
    """Sequence construction needs a label on every frame."""


# --- models ---

class SingleClass(ProctorKitError):
    """Both label classes are required but only one is present."""


class TooFewMinority(ProctorKitError):
    """Minority class too small for the requested neighbor count."""


class NonFiniteFeature(ProctorKitError):
    """Training matrix contains NaN or inf after preprocessing."""


class ShapeMismatch(ProctorKitError):
    """Tensor shapes disagree with the model configuration."""


class EmptyDataset(ProctorKitError):
    """No training sequences were supplied."""


# --- metrics ---

class LengthMismatch(ProctorKitError):
    """Scores and labels differ in length."""


class EmptyMatrix(ProctorKitError):
    """Confusion matrix has no entries."""


# --- synthesis ---

class ScriptTooShort(ProctorKitError):
    """Scenario script is shorter than one window plus a target frame."""

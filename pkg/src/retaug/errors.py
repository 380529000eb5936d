"""Exception types shared across the pipeline."""


class RetaugError(Exception):
    """Base class for all pipeline errors."""


class ZeroVector(RetaugError):
    """Vector cannot be normalized (all zero or non-finite)."""


class DimensionMismatch(RetaugError):
    """Vectors or indexes disagree on embedding dimension."""


class DuplicateId(RetaugError):
    """A record id occurs more than once."""


class EmptyResult(RetaugError):
    """A string transformation produced an empty string."""


class TemplateFileMissing(RetaugError):
    """A bundled template data file could not be found."""


class MissingHypernym(RetaugError):
    """Synset lacks the hypernym required by the template."""


class MissingDefinition(RetaugError):
    """Synset lacks the definition required by the template."""


class ConfigError(RetaugError):
    """Invalid runtime configuration value."""


class DecodeError(RetaugError):
    """Bytes do not decode as a supported raster image."""


class TooSmall(RetaugError):
    """Image is below the minimum accepted side length."""


class InvalidSample(RetaugError):
    """Review-sample counts violate 0 <= confirmed <= reviewed <= candidates."""


class TooFewPoints(RetaugError):
    """Fewer points than requested clusters."""


class UnknownSplit(RetaugError):
    """A leakage report referenced a split that was never declared."""


class InsufficientRemainder(RetaugError):
    """Not enough remaining records to draw a disjoint split."""


class PoolTooSmall(RetaugError):
    """Pool cannot cover the per-class replica targets."""

    def __init__(self, deficient: dict[str, tuple[int, int]]):
        self.deficient = deficient  # wnid -> (available, required)
        detail = ", ".join(
            f"{wnid} has {have} of {need}" for wnid, (have, need) in sorted(deficient.items())
        )
        super().__init__(f"pool too small for classes: {detail}")


class IdCollision(RetaugError):
    """Two manifests being merged share an image id."""


class BadParams(RetaugError):
    """Job parameters failed validation."""


class UnknownJob(RetaugError):
    """No job with that id."""


class UnknownPair(RetaugError):
    """No candidate pair with that key."""


class InvalidVerdict(RetaugError):
    """Verdict value is not one of the accepted labels."""


class UnknownDataset(RetaugError):
    """No dataset manifest with that id."""


class UnknownImage(RetaugError):
    """No stored image with that id."""

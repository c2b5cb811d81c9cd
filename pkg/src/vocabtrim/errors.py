"""Exception hierarchy shared by every stage of the trimming pipeline."""


class VTError(Exception):
    """Base class for all vocabtrim errors."""


# tokenizer definitions
class SchemaError(VTError, ValueError):
    """Document does not follow the supported tokenizer schema."""


class InvariantError(VTError, ValueError):
    """A structurally valid object violates a domain invariant."""


class NoCoverage(VTError):
    """A word cannot be segmented and there is no unknown token to fall back on."""


class IdOutOfRange(VTError, IndexError):
    """A token ID is outside the vocabulary."""


# frequency tables and plans
class FingerprintMismatch(VTError):
    """Two artifacts were produced from different tokenizers."""


class FormatError(VTError, ValueError):
    """A table or plan file is malformed."""


class BudgetTooSmall(VTError, ValueError):
    """A top-n budget cannot hold the mandatory tokens."""


class DerivationMissing(VTError):
    """A composite BPE token has no merge that produces it."""


class ClosureViolation(VTError):
    """A kept BPE token depends on a token that was dropped."""


class DroppedToken(VTError, KeyError):
    """An ID sequence refers to a token removed by the plan."""


# checkpoints
class HeaderError(VTError, ValueError):
    """Tensor container header is malformed."""


class BoundsError(VTError, ValueError):
    """Tensor payload offsets overlap or run past the payload."""


class DtypeError(VTError, ValueError):
    """Unknown tensor dtype."""


class ProfileMismatch(VTError):
    """Model profile does not describe the given plan or checkpoint."""


class AxisMismatch(VTError):
    """A vocabulary axis has an unexpected extent."""


class TiedGroupInconsistent(VTError):
    """Tensors declared as tied disagree in vocabulary extent."""


class FieldMissing(VTError, KeyError):
    """Configuration document lacks the vocabulary-size field."""

from enum import Enum


class ClassLabel(str, Enum):
    STEM = "stem"
    CALYX = "calyx"
    DEFECT = "defect"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValueError(f"unknown class label {text!r}") from None


# Fixed order used for confusion matrices and tie-breaking.
LABEL_ORDER = (ClassLabel.STEM, ClassLabel.CALYX, ClassLabel.DEFECT)

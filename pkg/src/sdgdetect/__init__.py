"""sdgdetect: specialized SDG text detection, LLM prompt protocols, and
the comparison statistics between the two."""

__version__ = "0.1.0"

from .corpus import Corpus, LabeledDocument, SdgLabelSet, SplitSpec

__all__ = ["Corpus", "LabeledDocument", "SdgLabelSet", "SplitSpec", "__version__"]

"""Tokenization, vocabularies and treebank handling."""
from .token_map import TokenMap, TokenMapError, denormalize, normalize
from .vocabulary import OutOfVocabularyError, Vocabulary
from .treebank import HeadRules, TreebankParseError, TreebankTree, binarize_and_headify, read_treebank

__all__ = [
    "TokenMap",
    "TokenMapError",
    "denormalize",
    "normalize",
    "OutOfVocabularyError",
    "Vocabulary",
    "HeadRules",
    "TreebankParseError",
    "TreebankTree",
    "binarize_and_headify",
    "read_treebank",
]

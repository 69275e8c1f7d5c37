"""Domain labels shared by the augmentation, normalization and selection stack."""

from enum import Enum


class DomainTag(str, Enum):
    SOURCE = "source"
    SIMILAR = "similar"
    DISSIMILAR = "dissimilar"


# the two normalization branches, in fixed order (SIMILAR wins exact ties)
BRANCHES = (DomainTag.SIMILAR, DomainTag.DISSIMILAR)

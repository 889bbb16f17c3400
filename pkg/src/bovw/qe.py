"""Query expansion: average the query BoW with top-ranked evidence and search again.

Global expansion (GQE) averages whole-image BoWs of the top-N results; local
expansion (LQE) averages only the BoWs under each result's localization
window, masking out background. Contributors are L2-normalized before
averaging by default so no single large image dominates.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .bow import BowVector, encode_region, mean_vectors, normalized
from .codebook import AssignmentMap
from .errors import DataError, ValidationError
from .index import RankedList
from .rerank import Localization


def global_expand(
    query_bow: BowVector,
    ranking: RankedList,
    bows: Mapping[str, BowVector],
    top_n: int,
    normalize_contributors: bool = True,
) -> BowVector:
    """Mean of the query BoW and the top-N ranked documents' full BoWs."""
    if top_n < 0:
        raise ValidationError("top_n must be >= 0")
    contributors = [query_bow]
    for doc_id, _ in ranking.items[: min(top_n, len(ranking.items))]:
        try:
            contributors.append(bows[doc_id])
        except KeyError:
            raise DataError(f"no stored BoW for document '{doc_id}'") from None
    if normalize_contributors:
        contributors = [normalized(v) for v in contributors]
    return mean_vectors(contributors)


def local_expand(
    query_box_bow: BowVector,
    localizations: Sequence[Localization],
    maps: Mapping[str, AssignmentMap],
    top_n: int,
    vocab_size: int,
    normalize_contributors: bool = True,
) -> BowVector:
    """Mean of the query-box BoW and the top-N localization-window BoWs."""
    if top_n < 0:
        raise ValidationError("top_n must be >= 0")
    contributors = [query_box_bow]
    for loc in localizations[: min(top_n, len(localizations))]:
        try:
            amap = maps[loc.doc_id]
        except KeyError:
            raise DataError(f"no assignment map for document '{loc.doc_id}'") from None
        contributors.append(encode_region(amap, loc.window, vocab_size))
    if normalize_contributors:
        contributors = [normalized(v) for v in contributors]
    return mean_vectors(contributors)

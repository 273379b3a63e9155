"""Token sequence layout for the text-to-views transformer.

One fixed-length sequence per training sample:

    [BOS] [pose] [caption x N_T] [SEP_P] [prior x N_I] [SEP_T] [target x N_I]

The unified vocabulary concatenates special ids, the 36 pose tokens, the
caption vocabulary and the image codebook.  A masked prior replaces every
prior position with MASK_PRIOR *before* embedding, so target logits cannot
depend on the hidden content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation

BOS = 0
PAD = 1
MASK_PRIOR = 2
SEP_PRIOR = 3
SEP_TARGET = 4
NUM_SPECIALS = 5

NUM_POSES = 36


@dataclass(frozen=True)
class SequenceLayout:
    n_t: int                 # caption positions
    n_i: int                 # image-token positions per view
    caption_vocab: int
    image_vocab: int
    pose_vocab: int = NUM_POSES

    @property
    def pose_base(self) -> int:
        return NUM_SPECIALS

    @property
    def caption_base(self) -> int:
        return NUM_SPECIALS + self.pose_vocab

    @property
    def image_base(self) -> int:
        return self.caption_base + self.caption_vocab

    @property
    def vocab_size(self) -> int:
        return self.image_base + self.image_vocab

    @property
    def total_len(self) -> int:
        return 4 + self.n_t + 2 * self.n_i

    # positions
    @property
    def pose_pos(self) -> int:
        return 1

    @property
    def caption_slice(self) -> slice:
        return slice(2, 2 + self.n_t)

    @property
    def sep_prior_pos(self) -> int:
        return 2 + self.n_t

    @property
    def prior_slice(self) -> slice:
        return slice(3 + self.n_t, 3 + self.n_t + self.n_i)

    @property
    def sep_target_pos(self) -> int:
        return 3 + self.n_t + self.n_i

    @property
    def target_slice(self) -> slice:
        return slice(4 + self.n_t + self.n_i, 4 + self.n_t + 2 * self.n_i)

    def segments(self) -> dict[str, list[int]]:
        """Position partition; every index belongs to exactly one segment."""
        return {
            "bos": [0],
            "pose": [self.pose_pos],
            "caption": list(range(*self.caption_slice.indices(self.total_len))),
            "sep_prior": [self.sep_prior_pos],
            "prior": list(range(*self.prior_slice.indices(self.total_len))),
            "sep_target": [self.sep_target_pos],
            "target": list(range(*self.target_slice.indices(self.total_len))),
        }

    def caption_token(self, caption_id: int) -> int:
        return self.caption_base + caption_id

    def image_token(self, code_id: int) -> int:
        return self.image_base + code_id

    def build_sequence(self, pose_index: int, caption_ids: list[int] | np.ndarray,
                       prior: np.ndarray | None,
                       target: np.ndarray | None) -> np.ndarray:
        """Assemble one (L,) int64 sequence.

        ``caption_ids`` are caption-vocabulary ids (already padded or not;
        padding is applied here).  ``prior``/``target`` are flat code-index
        arrays of length n_i; ``prior=None`` masks the whole prior segment
        and ``target=None`` zero-fills it (used when sampling).
        """
        if not 0 <= pose_index < self.pose_vocab:
            raise ContractViolation(f"pose_index {pose_index} out of range")
        caption_ids = list(np.asarray(caption_ids).tolist())
        if len(caption_ids) > self.n_t:
            raise ContractViolation(
                f"caption of {len(caption_ids)} tokens exceeds N_T={self.n_t}")
        caption_ids = caption_ids + [0] * (self.n_t - len(caption_ids))
        seq = np.empty(self.total_len, dtype=np.int64)
        seq[0] = BOS
        seq[self.pose_pos] = self.pose_base + pose_index
        seq[self.caption_slice] = self.caption_base + np.asarray(caption_ids)
        seq[self.sep_prior_pos] = SEP_PRIOR
        if prior is None:
            seq[self.prior_slice] = MASK_PRIOR
        else:
            prior = np.asarray(prior).reshape(-1)
            if prior.size != self.n_i:
                raise ContractViolation(f"prior has {prior.size} tokens, need {self.n_i}")
            seq[self.prior_slice] = self.image_base + prior
        seq[self.sep_target_pos] = SEP_TARGET
        if target is None:
            seq[self.target_slice] = self.image_base
        else:
            target = np.asarray(target).reshape(-1)
            if target.size != self.n_i:
                raise ContractViolation(f"target has {target.size} tokens, need {self.n_i}")
            seq[self.target_slice] = self.image_base + target
        return seq

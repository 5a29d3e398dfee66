"""Checkpoint wrappers: one NLI scorer, one text generator.

Both wrappers hold a single model instance and are safe to call from one
thread at a time; the app serializes requests around them.
"""

import torch
from transformers import (
    AutoModelForCausalLM,
    AutoModelForSeq2SeqLM,
    AutoModelForSequenceClassification,
    AutoTokenizer,
)

from .config import SidecarConfig


def _maybe_quantize(model, enabled: bool):
    if not enabled:
        return model
    return torch.ao.quantization.quantize_dynamic(
        model, {torch.nn.Linear}, dtype=torch.qint8
    )


def _position_limit(model) -> int | None:
    for attr in ("max_position_embeddings", "n_positions"):
        value = getattr(model.config, attr, None)
        if isinstance(value, int) and value > 0:
            return value
    return None


def _label_index(id2label) -> dict[str, int]:
    """Map entailment/neutral/contradiction onto the head's label ids."""
    index: dict[str, int] = {}
    for i, name in id2label.items():
        lowered = str(name).lower()
        for key in ("entail", "neutral", "contra"):
            if lowered.startswith(key):
                index[key] = int(i)
    if len(index) != 3:
        raise ValueError(
            f"classifier head is not a 3-way NLI head: id2label={id2label!r}"
        )
    return index


class NliScorer:
    def __init__(self, config: SidecarConfig):
        self._tokenizer = AutoTokenizer.from_pretrained(config.nli_model_id)
        model = AutoModelForSequenceClassification.from_pretrained(config.nli_model_id)
        model = model.to(config.device).eval()
        self._model = _maybe_quantize(model, config.quantize_int8)
        self._index = _label_index(self._model.config.id2label)
        self._device = config.device
        # the checkpoint's position table caps the usable window
        limit = _position_limit(self._model)
        self._max_tokens = min(config.max_input_tokens, limit or config.max_input_tokens)

    def score(self, premise: str, hypotheses: list[str]) -> list[dict]:
        rows = []
        with torch.inference_mode():
            for hypothesis in hypotheses:
                encoded = self._tokenizer(
                    premise,
                    hypothesis,
                    truncation=True,
                    max_length=self._max_tokens,
                    return_tensors="pt",
                ).to(self._device)
                logits = self._model(**encoded).logits[0]
                probs = torch.softmax(logits.float(), dim=-1)
                rows.append(
                    {
                        "hypothesis": hypothesis,
                        "entailment": probs[self._index["entail"]].item(),
                        "neutral": probs[self._index["neutral"]].item(),
                        "contradiction": probs[self._index["contra"]].item(),
                    }
                )
        return rows


class Generator:
    def __init__(self, config: SidecarConfig):
        self._tokenizer = AutoTokenizer.from_pretrained(config.gen_model_id)
        try:
            model = AutoModelForCausalLM.from_pretrained(config.gen_model_id)
            self._seq2seq = False
        except ValueError:
            model = AutoModelForSeq2SeqLM.from_pretrained(config.gen_model_id)
            self._seq2seq = True
        model = model.to(config.device).eval()
        self._model = _maybe_quantize(model, config.quantize_int8)
        self._device = config.device
        self._max_tokens = config.max_input_tokens
        self._limit = _position_limit(self._model)
        pad = self._tokenizer.pad_token_id
        self._pad_id = pad if pad is not None else self._tokenizer.eos_token_id

    def generate(
        self,
        prompt: str,
        n: int,
        max_new_tokens: int,
        temperature: float,
        seed: int | None,
    ) -> list[str]:
        prompt_budget = self._max_tokens
        if self._limit is not None and not self._seq2seq:
            # prompt and continuation share one position table
            max_new_tokens = min(max_new_tokens, self._limit - 8)
            prompt_budget = min(prompt_budget, self._limit - max_new_tokens)
        elif self._limit is not None:
            prompt_budget = min(prompt_budget, self._limit)
        encoded = self._tokenizer(
            prompt,
            truncation=True,
            max_length=prompt_budget,
            return_tensors="pt",
        ).to(self._device)
        sample = temperature > 0
        kwargs = dict(
            max_new_tokens=max_new_tokens,
            do_sample=sample,
            pad_token_id=self._pad_id,
        )
        if sample:
            kwargs["temperature"] = temperature
            kwargs["num_return_sequences"] = n
            if seed is not None:
                torch.manual_seed(seed)
        with torch.inference_mode():
            sequences = self._model.generate(**encoded, **kwargs)
        if not self._seq2seq:
            sequences = sequences[:, encoded["input_ids"].shape[1]:]
        texts = [
            self._tokenizer.decode(row, skip_special_tokens=True).strip()
            for row in sequences
        ]
        if not sample:
            texts = texts * n  # greedy is one deterministic sequence
        return texts


def load_backends(config: SidecarConfig) -> tuple[NliScorer, Generator]:
    return NliScorer(config), Generator(config)

"""Fixtures: tiny random-weight checkpoints, an in-process app, a live server.

Checkpoints are fabricated on disk with word-level tokenizers so the
suite never touches the network. Their outputs are meaningless but
deterministic; everything asserted here is protocol, not quality.
"""

import threading
import time

import pytest
import torch
import uvicorn
from fastapi.testclient import TestClient
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from tokenizers.trainers import WordLevelTrainer
from transformers import (
    BertConfig,
    BertForSequenceClassification,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
)

from ztail_sidecar.app import build_app
from ztail_sidecar.config import SidecarConfig

_CORPUS = [
    "this text is related to night cream face wash body lotion",
    "here is some review that entails hair oil nail polish perfume",
    "the cat sat on the mat what area is this text related to",
    "lipstick shampoo glitter foam rinse smooth daily glow scent",
    "really love bought again price arrived week gift small works",
]


def _make_tokenizer(with_pair_template: bool) -> PreTrainedTokenizerFast:
    tok = Tokenizer(WordLevel(unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    trainer = WordLevelTrainer(
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"], vocab_size=400
    )
    tok.train_from_iterator(_CORPUS, trainer)
    if with_pair_template:
        tok.post_processor = TemplateProcessing(
            single="[CLS] $A [SEP]",
            pair="[CLS] $A [SEP] $B [SEP]",
            special_tokens=[
                ("[CLS]", tok.token_to_id("[CLS]")),
                ("[SEP]", tok.token_to_id("[SEP]")),
            ],
        )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
    )


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory) -> tuple[str, str]:
    torch.manual_seed(0)
    root = tmp_path_factory.mktemp("checkpoints")

    nli_dir = root / "nli"
    nli_tok = _make_tokenizer(with_pair_template=True)
    nli = BertForSequenceClassification(
        BertConfig(
            vocab_size=nli_tok.vocab_size,
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=64,
            max_position_embeddings=128,
            num_labels=3,
            id2label={0: "contradiction", 1: "neutral", 2: "entailment"},
            label2id={"contradiction": 0, "neutral": 1, "entailment": 2},
            pad_token_id=nli_tok.pad_token_id,
        )
    )
    nli.save_pretrained(nli_dir)
    nli_tok.save_pretrained(nli_dir)

    gen_dir = root / "gen"
    gen_tok = _make_tokenizer(with_pair_template=False)
    gen = GPT2LMHeadModel(
        GPT2Config(
            vocab_size=gen_tok.vocab_size,
            n_embd=32,
            n_layer=2,
            n_head=2,
            n_positions=128,
            bos_token_id=gen_tok.convert_tokens_to_ids("[CLS]"),
            eos_token_id=gen_tok.convert_tokens_to_ids("[SEP]"),
        )
    )
    gen.save_pretrained(gen_dir)
    gen_tok.save_pretrained(gen_dir)
    return str(nli_dir), str(gen_dir)


@pytest.fixture(scope="session")
def config(checkpoints) -> SidecarConfig:
    nli_dir, gen_dir = checkpoints
    return SidecarConfig(nli_model_id=nli_dir, gen_model_id=gen_dir, port=0)


def wait_ready(client, timeout_s: float = 30.0) -> None:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        body = client.get("/healthz").json()
        if body["status"] == "ready":
            return
        if body["status"] == "failed":
            raise RuntimeError(body["error"])
        time.sleep(0.05)
    raise TimeoutError("sidecar did not become ready")


@pytest.fixture(scope="session")
def client(config):
    with TestClient(build_app(config)) as c:
        wait_ready(c)
        yield c


@pytest.fixture(scope="session")
def live_endpoint(config):
    """Real socket server, for clients that speak actual HTTP."""
    server = uvicorn.Server(
        uvicorn.Config(build_app(config), host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise TimeoutError("uvicorn did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


# The acceptance pieces for this package: wire conformance over 20 canned
# requests, seeded repeatability, and a primary-package batch across HTTP.
_CRITERION_TESTS = (
    "test_canned_requests_conform",
    "test_seeded_greedy_repeats_identically",
    "test_entail_only_batch_through_sidecar",
)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    del exitstatus, config
    status = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, ()):
            name = getattr(report, "location", (None, None, ""))[2]
            if name in _CRITERION_TESTS:
                status.setdefault(name, outcome)
    if set(status) != set(_CRITERION_TESTS):
        return  # partial selection: no verdict
    verdict = "PASS" if all(s == "passed" for s in status.values()) else "FAIL"
    terminalreporter.write_sep("-", "acceptance criteria")
    terminalreporter.write_line(
        f"[{verdict}] criterion 9: sidecar conformance, seeded determinism, "
        "batch served over HTTP"
    )

"""Server configuration."""

from dataclasses import dataclass


@dataclass(frozen=True)
class SidecarConfig:
    """Checkpoint ids plus serving knobs.

    Model ids are anything transformers can load: a hub id or a local
    directory. Quantization is opt-in and makes no output-equivalence
    promise against the full-precision weights.
    """

    nli_model_id: str
    gen_model_id: str
    device: str = "cpu"
    quantize_int8: bool = False
    max_input_tokens: int = 512
    port: int = 8100

    def __post_init__(self) -> None:
        if not self.nli_model_id.strip():
            raise ValueError("nli_model_id must be non-empty")
        if not self.gen_model_id.strip():
            raise ValueError("gen_model_id must be non-empty")
        if not 0 <= self.port <= 65535:  # 0 binds an ephemeral port
            raise ValueError(f"port out of range: {self.port}")
        if self.max_input_tokens < 8:
            raise ValueError("max_input_tokens must be >= 8")

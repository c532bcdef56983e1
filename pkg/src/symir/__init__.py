"""symir: a desk-scale toolkit for symbolic music retrieval pipelines.

Lossless Standard MIDI File <-> MIDI Text Format codecs, standard <->
interleaved ABC notation conversion, bar-patching tokenization with the
masked-modeling corruption scheme, toy-scale masked and contrastive
training over a minimal numpy autograd, LLM-assisted metadata refinement,
and a retrieval/classification evaluation harness.
"""

from .smf import Message, SmfFile, TrackEvent, merge_tracks, parse_smf, write_smf
from .mtf import (
    MtfDocument,
    MtfLine,
    document_text,
    merge_lines,
    midi_to_mtf,
    mtf_to_midi,
    parse_mtf,
    render_merged_text,
)
from .abc_notation import (
    AbcTune,
    InterleavedAbcTune,
    emit_abc,
    emit_interleaved,
    interleaved_to_standard,
    parse_abc,
    standard_to_interleaved,
    strip_instruments,
)
from .patching import (
    CorruptionPlan,
    Patch,
    PatchSequence,
    corrupt,
    decode_text,
    encode_chars,
    patchize_abc,
    patchize_mtf,
    truncate,
)
from .model import (
    EncoderConfig,
    ModelConfig,
    decode_chars,
    encode_music,
    encode_text,
    load_checkpoint,
    patch_embed,
    save_checkpoint,
)
from .corpus import Triplet, read_triplets, write_triplets
from .sampling import SamplerPolicy, sample_view, text_dropout
from .training import (
    TrainConfig,
    infonce_loss,
    optimizer_step,
    train_clamp,
    train_m3,
)
from .retrieval import (
    EmbeddingIndex,
    LabeledDataset,
    export_embeddings,
    hit_rate_at_k,
    import_embeddings,
    linear_probe,
    mrr,
    search,
)
from .langid import detect_language
from .refinery import (
    MockLlmClient,
    build_prompt,
    deduplicate,
    pick_language,
    refine_corpus,
    validate_response,
)

__version__ = "0.1.0"

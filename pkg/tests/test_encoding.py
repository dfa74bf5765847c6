"""Tests for the encoder backends."""

import re
from types import SimpleNamespace

import pytest
import torch

from pyeventfill.config import BackendConfig, BackendFamily, Modality, ModelConfig
from pyeventfill.encoding import pretrained
from pyeventfill.encoding.base import ImageGrid, tokens_in_span
from pyeventfill.encoding.pretrained import _self_attention_mask
from pyeventfill.encoding.registry import (
    build_backends,
    build_query_model,
    build_text_encoder,
    build_vision_encoder,
)
from pyeventfill.encoding.synthetic import (
    SyntheticQueryModel,
    SyntheticTextEncoder,
    SyntheticTokenizer,
    SyntheticVisionEncoder,
)
from pyeventfill.exceptions import (
    BoundsError,
    ConfigurationError,
    SequenceTooLongError,
    ShapeError,
    ValidationError,
)
from pyeventfill.ontology.templates import parse_template, render_prompt

WORDS = ("Police", "arrested", "the", "protesters", "in", "Kyiv", ".")


class TestSyntheticTokenizer:
    """Tests for the hashing tokenizer."""

    def test_pieces(self):
        """Test words split into fixed-width pieces."""
        tokenizer = SyntheticTokenizer(subword_chars=4)
        assert tokenizer.pieces("extradition") == ["extr", "##adit", "##ion"]
        assert tokenizer.pieces("the") == ["the"]

    def test_alignment(self):
        """Test every word gets a contiguous subword range."""
        ids, alignment = SyntheticTokenizer(subword_chars=4).tokenize_words(WORDS)
        assert alignment[0] == (0, 2)
        assert alignment[1] == (2, 4)
        assert alignment[-1][1] == len(ids)

    def test_ids_depend_on_seed(self):
        """Test the seed changes every id."""
        first = SyntheticTokenizer(seed=0).token_id("arrest")
        assert first == SyntheticTokenizer(seed=0).token_id("arrest")
        assert first != SyntheticTokenizer(seed=1).token_id("arrest")

    def test_text_offsets(self):
        """Test character offsets of free text."""
        ids, offsets = SyntheticTokenizer(subword_chars=4).tokenize_text("Attacker hit.")
        assert offsets == [(0, 4), (4, 8), (9, 12), (12, 13)]
        assert tokens_in_span(offsets, (0, 8)) == (0, 1)
        assert len(ids) == 4


class TestSyntheticTextEncoder:
    """Tests for the hash-embedding text encoder."""

    def test_shapes(self):
        """Test one row per subword."""
        context = SyntheticTextEncoder(hidden_size=16).encode_text(WORDS)
        assert context.token_embeddings.shape == (len(context.tokens), 16)
        assert context.hidden_size == 16
        assert context.subword_range((3, 4)) == context.subword_alignment[3]

    def test_deterministic(self):
        """Test equal seeds give equal embeddings."""
        first = SyntheticTextEncoder(seed=5).encode_text(WORDS).token_embeddings
        second = SyntheticTextEncoder(seed=5).encode_text(WORDS).token_embeddings
        assert torch.equal(first, second)

    def test_span_outside_sentence(self):
        """Test spans beyond the sentence."""
        context = SyntheticTextEncoder().encode_text(WORDS)
        with pytest.raises(BoundsError):
            context.subword_range((5, 9))
        with pytest.raises(BoundsError):
            context.subword_range((2, 2))

    def test_empty_sentence(self):
        """Test empty input."""
        with pytest.raises(ValidationError):
            SyntheticTextEncoder().encode_text(())

    def test_too_long(self):
        """Test the subword limit."""
        encoder = SyntheticTextEncoder(max_length=4)
        with pytest.raises(SequenceTooLongError) as excinfo:
            encoder.encode_text(WORDS)
        assert excinfo.value.limit == 4
        assert excinfo.value.length > 4


class TestSyntheticVisionEncoder:
    """Tests for the random-projection patch encoder."""

    def test_grid(self):
        """Test patches and original size are recorded."""
        encoder = SyntheticVisionEncoder(hidden_size=16, image_size=224, patch_size=16)
        image = torch.zeros(3, 100, 300, dtype=torch.uint8)
        context = encoder.encode_image(image)
        assert context.grid == ImageGrid(
            rows=14, cols=14, patch_size=16, image_width=300, image_height=100
        )
        assert context.patch_embeddings.shape == (196, 16)
        assert context.cls_embedding.shape == (16,)

    def test_grayscale(self):
        """Test single-channel images are accepted."""
        encoder = SyntheticVisionEncoder(hidden_size=8, image_size=32, patch_size=16)
        context = encoder.encode_image(torch.rand(1, 32, 32))
        assert context.grid.num_patches == 4

    def test_projection_is_a_buffer(self):
        """Test the fixed projection is not trained."""
        encoder = SyntheticVisionEncoder(hidden_size=8, image_size=32, patch_size=16)
        parameter_names = {name for name, _ in encoder.named_parameters()}
        assert "patch_weight" not in parameter_names
        assert {"adapter.weight", "adapter.bias"} == parameter_names

    def test_bad_geometry(self):
        """Test image sizes must tile into patches."""
        with pytest.raises(ConfigurationError):
            SyntheticVisionEncoder(image_size=100, patch_size=16)

    def test_bad_shape(self):
        """Test non-image tensors."""
        encoder = SyntheticVisionEncoder(hidden_size=8, image_size=32, patch_size=16)
        with pytest.raises(ShapeError):
            encoder.encode_image(torch.zeros(32, 32))


class TestSyntheticQueryModel:
    """Tests for the one-block query model."""

    def prompt(self):
        return render_prompt(parse_template("[Attacker] attacked [Target] using [Instrument]."))

    def test_role_tokens(self):
        """Test every role covers prompt subwords."""
        model = SyntheticQueryModel(hidden_size=16, num_heads=2).eval()
        encoding = model.decode_queries(self.prompt(), None)
        assert encoding.features.shape == (len(encoding.tokens), 16)
        assert encoding.role_token_indices["Attacker"] == (0, 1)
        assert all(encoding.role_token_indices[role] for role in ("Target", "Instrument"))

    def test_cross_attention_reads_context(self):
        """Test queries change with the context they attend to."""
        model = SyntheticQueryModel(hidden_size=16, num_heads=2).eval()
        encoder = SyntheticTextEncoder(hidden_size=16)
        model.attach_memory(Modality.TEXT, 16)
        first = encoder.encode_text(WORDS)
        second = encoder.encode_text(("Soldiers", "fired", "rockets", "."))
        with torch.no_grad():
            a = model.decode_queries(self.prompt(), first).features
            b = model.decode_queries(self.prompt(), second).features
            c = model.decode_queries(self.prompt(), None).features
        assert not torch.allclose(a, b)
        assert not torch.allclose(a, c)

    def test_memory_adapter_width(self):
        """Test contexts of another width get a projection."""
        model = SyntheticQueryModel(hidden_size=16, num_heads=2)
        model.attach_memory(Modality.IMAGE, 8)
        model.attach_memory(Modality.TEXT, 16)
        assert isinstance(model.memory_projections["image"], torch.nn.Linear)
        assert isinstance(model.memory_projections["text"], torch.nn.Identity)

    def test_unattached_modality(self):
        """Test contexts need a registered adapter."""
        model = SyntheticQueryModel(hidden_size=16, num_heads=2)
        context = SyntheticTextEncoder(hidden_size=16).encode_text(WORDS)
        with pytest.raises(ConfigurationError):
            model.memory(context)

    def test_encoder_only_without_cross_attention(self):
        """Test encoder-only models cannot attend unless adapted."""
        plain = SyntheticQueryModel(
            BackendFamily.ENCODER_ONLY_TEXT, hidden_size=16, num_heads=2, cross_attention=False
        )
        assert not plain.cross_attention_supported
        context = SyntheticTextEncoder(hidden_size=16).encode_text(WORDS)
        with pytest.raises(ConfigurationError):
            plain.memory(context)
        adapted = SyntheticQueryModel(
            BackendFamily.ENCODER_ONLY_TEXT, hidden_size=16, num_heads=2, cross_attention=True
        )
        assert adapted.cross_attention_supported

    def test_bad_configuration(self):
        """Test vision families and indivisible head counts."""
        with pytest.raises(ConfigurationError):
            SyntheticQueryModel(BackendFamily.VISION)
        with pytest.raises(ConfigurationError):
            SyntheticQueryModel(hidden_size=10, num_heads=4)


class TestRegistry:
    """Tests for building backends from configuration."""

    def test_family_checks(self):
        """Test backends refuse the wrong family."""
        with pytest.raises(ConfigurationError):
            build_text_encoder(BackendConfig(family=BackendFamily.VISION))
        with pytest.raises(ConfigurationError):
            build_vision_encoder(BackendConfig(family=BackendFamily.ENCODER_ONLY_TEXT))
        with pytest.raises(ConfigurationError):
            build_query_model(BackendConfig(family=BackendFamily.VISION))

    def test_joint_query_model(self):
        """Test the default configuration shares one query model."""
        backends = build_backends(ModelConfig())
        assert set(backends.query_models) == {"joint"}
        assert backends.text_encoder is not None
        assert backends.vision_encoder is not None

    def test_modality_query_models(self):
        """Test split prompts build one query model per modality."""
        config = ModelConfig(ablations={"joint_prompts": False})
        assert set(build_backends(config).query_models) == {"text", "image"}

    def test_prototypes_need_no_query_model(self):
        """Test the prompt-free variant builds no query model."""
        config = ModelConfig(ablations={"use_prototypes": True})
        assert build_backends(config).query_models == {}

    def test_no_encoders(self):
        """Test a model needs at least one encoder."""
        with pytest.raises(ConfigurationError):
            build_backends(ModelConfig(text_backend=None, vision_backend=None))


class WhitespaceTokenizer:
    """Stands in for a Hugging Face tokenizer: one id per word, with offsets."""

    def __call__(self, text, return_offsets_mapping=False, return_tensors=None):
        spans = [(match.start(), match.end()) for match in re.finditer(r"\S+", text)]
        ids = [sum(map(ord, text[start:end])) % 97 + 3 for start, end in spans]
        return {
            "input_ids": torch.tensor([ids]),
            "attention_mask": torch.ones(1, len(ids), dtype=torch.long),
            "offset_mapping": torch.tensor([spans]),
        }


class TestPretrainedQueryModel:
    """Tests for the Hugging Face query model wrapper."""

    def test_self_attention_mask(self):
        """Test the expanded mask lets every token see all unpadded tokens."""
        mask = _self_attention_mask(torch.tensor([[1, 1, 0]]))
        assert mask.shape == (1, 3, 3)
        assert mask[0].tolist() == [[1, 1, 0], [1, 1, 0], [1, 1, 0]]

    def test_cross_attending_bert_stays_bidirectional(self, monkeypatch):
        """Test the first prompt token sees later ones once BERT cross-attends."""
        transformers = pytest.importorskip("transformers")

        def tiny_bert(source, **overrides):
            torch.manual_seed(0)
            config = transformers.BertConfig(
                vocab_size=128,
                hidden_size=16,
                num_hidden_layers=1,
                num_attention_heads=2,
                intermediate_size=32,
                **overrides,
            )
            return transformers.BertModel(config)

        tokenizer = WhitespaceTokenizer()
        hf = SimpleNamespace(
            AutoTokenizer=SimpleNamespace(from_pretrained=lambda source, **_: tokenizer),
            AutoModel=SimpleNamespace(from_pretrained=tiny_bert),
        )
        monkeypatch.setattr(pretrained, "_transformers", lambda: hf)
        model = pretrained.PretrainedQueryModel("tiny-bert", BackendFamily.ENCODER_ONLY_TEXT)
        model.eval()
        model.attach_memory(Modality.TEXT, 16)
        context = SyntheticTextEncoder(hidden_size=16).encode_text(WORDS)
        with torch.no_grad():
            target = model.decode_queries(
                render_prompt(parse_template("[Attacker] attacked [Target].")), context
            )
            place = model.decode_queries(
                render_prompt(parse_template("[Attacker] attacked [Place].")), context
            )
            alone = model.decode_queries(
                render_prompt(parse_template("[Attacker] attacked [Target].")), None
            )
        assert model.cross_attention_supported
        assert target.role_token_indices["Attacker"] == (0,)
        assert not torch.allclose(target.features[0], place.features[0])
        assert not torch.allclose(target.features, alone.features)

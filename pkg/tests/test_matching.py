"""Tests for matching scores, the loss, role assignment and the model."""

import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch.func import functional_call

from pyeventfill.config import (
    AblationConfig,
    BackendConfig,
    BackendFamily,
    Modality,
    PromptConfig,
    PromptVariant,
    update_config,
)
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateBox,
    CandidateSpan,
    EventInstance,
    GoldArgument,
    ImageRef,
    Span,
    SyntheticCanvas,
)
from pyeventfill.exceptions import ConfigurationError, OntologyError, ShapeError, ValidationError
from pyeventfill.matching.model import build_model, candidate_labels
from pyeventfill.matching.networks import MappingNetwork, PrototypeBank
from pyeventfill.matching.scoring import (
    MatchResult,
    assign_roles,
    bce_loss,
    match_score,
    matching_logits,
)

probabilities = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
score_rows = st.lists(probabilities, min_size=1, max_size=6)
thresholds = st.floats(min_value=0.01, max_value=0.99)


def naive_bce(scores, labels, clamp=30.0, eps=1e-15):
    total = 0.0
    for row_scores, row_labels in zip(scores.tolist(), labels.tolist(), strict=True):
        for score, label in zip(row_scores, row_labels, strict=True):
            p = min(max(score, eps), 1 - eps)
            logit = min(max(math.log(p / (1 - p)), -clamp), clamp)
            p = 1 / (1 + math.exp(-logit))
            total -= label * math.log(p) + (1 - label) * math.log(1 - p)
    return total / len(scores)


class ScorePath(torch.nn.Module):
    """Both mapping networks followed by the matching score."""

    def __init__(self):
        super().__init__()
        self.candidates = MappingNetwork(6, 4, dropout=0.0)
        self.queries = MappingNetwork(5, 4, dropout=0.0)

    def forward(self, candidates, queries):
        return match_score(self.candidates(candidates)[:, None], self.queries(queries)[None])


def meet_event(words=("Leaders", "met", "in", "Paris", "."), **kwargs):
    return EventInstance(
        instance_id="doc1_0:e0",
        doc_id="doc1",
        modality=Modality.TEXT,
        event_type="Contact:Meet",
        ontology="m2e2",
        sentence_id="doc1_0",
        words=words,
        trigger=Span(start=1, end=2),
        entity_candidates=(
            CandidateSpan(span=Span(start=0, end=1)),
            CandidateSpan(span=Span(start=3, end=4)),
        ),
        arguments=(
            GoldArgument(role="Entity", span=Span(start=0, end=1)),
            GoldArgument(role="Place", span=Span(start=3, end=4)),
        ),
        **kwargs,
    )


class TestMatchScore:
    """Tests for the candidate-query score."""

    def test_sigmoid_of_dot_product(self):
        """Test the score of two vectors."""
        score = match_score(torch.tensor([1.0, 2.0]), torch.tensor([0.5, 0.25]))
        assert float(score) == pytest.approx(1 / (1 + math.exp(-1.0)))

    def test_width_mismatch(self):
        """Test vectors of different widths."""
        with pytest.raises(ShapeError):
            match_score(torch.zeros(3), torch.zeros(4))
        with pytest.raises(ShapeError):
            matching_logits(torch.zeros(2, 3), torch.zeros(2, 4))

    def test_logit_matrix(self):
        """Test logits are all candidate-query dot products."""
        candidates = torch.randn(3, 5)
        queries = torch.randn(2, 5)
        logits = matching_logits(candidates, queries)
        assert logits.shape == (3, 2)
        assert torch.allclose(torch.sigmoid(logits[2, 1]), match_score(candidates[2], queries[1]))


class TestBceLoss:
    """Tests for the matching loss."""

    def test_matches_naive_sum(self):
        """Test 100 random |C| x R instances against an explicit double loop."""
        generator = torch.Generator().manual_seed(0)
        for _ in range(100):
            candidates, roles = (int(n) for n in torch.randint(1, 9, (2,), generator=generator))
            scores = torch.rand(candidates, roles, generator=generator, dtype=torch.float64)
            labels = (torch.rand(candidates, roles, generator=generator) > 0.5).double()
            assert abs(float(bce_loss(scores, labels)) - naive_bce(scores, labels)) <= 1e-9

    def test_saturated_scores_stay_finite(self):
        """Test scores of exactly 0 and 1."""
        scores = torch.tensor([[0.0, 1.0], [1.0, 0.0]])
        labels = torch.tensor([[1.0, 0.0], [1.0, 0.0]])
        loss = bce_loss(scores, labels)
        assert torch.isfinite(loss)
        assert float(loss) == pytest.approx(30.0, rel=1e-3)

    def test_clamp_follows_config(self):
        """Test the logit clamp is configurable."""
        update_config(logit_clamp=5.0)
        loss = bce_loss(torch.tensor([[0.0]]), torch.tensor([[1.0]]))
        assert float(loss) == pytest.approx(math.log1p(math.exp(5.0)), rel=1e-4)

    def test_averaged_over_candidates(self):
        """Test doubling the candidates keeps the loss."""
        scores = torch.tensor([[0.2, 0.9]])
        labels = torch.tensor([[0.0, 1.0]])
        single = bce_loss(scores, labels)
        double = bce_loss(scores.repeat(2, 1), labels.repeat(2, 1))
        assert torch.allclose(single, double)

    def test_logits_path(self):
        """Test logits and probabilities give the same loss."""
        logits = torch.tensor([[-1.0, 2.0], [0.5, -3.0]])
        labels = torch.tensor([[0.0, 1.0], [1.0, 0.0]])
        from_scores = bce_loss(torch.sigmoid(logits), labels)
        assert torch.allclose(bce_loss(logits, labels, from_logits=True), from_scores, atol=1e-5)

    def test_empty(self):
        """Test no candidates means no loss."""
        loss = bce_loss(torch.zeros(0, 3), torch.zeros(0, 3))
        assert float(loss) == 0.0

    def test_invalid_inputs(self):
        """Test shape and label checks."""
        with pytest.raises(ShapeError):
            bce_loss(torch.zeros(2, 3), torch.zeros(3, 2))
        with pytest.raises(ValidationError):
            bce_loss(torch.zeros(1, 2), torch.tensor([[0.5, 1.0]]))

    def test_gradcheck(self):
        """Test analytic gradients against finite differences."""
        generator = torch.Generator().manual_seed(1)
        logits = torch.randn(3, 4, generator=generator, dtype=torch.float64, requires_grad=True)
        labels = (torch.rand(3, 4, generator=generator) > 0.5).double()
        assert torch.autograd.gradcheck(
            lambda x: bce_loss(x, labels, from_logits=True), (logits,)
        )
        scores = torch.rand(3, 4, generator=generator, dtype=torch.float64) * 0.8 + 0.1
        scores.requires_grad_(True)
        assert torch.autograd.gradcheck(lambda x: bce_loss(x, labels), (scores,))

    @pytest.mark.parametrize("seed", range(20))
    def test_score_path_gradcheck(self, seed):
        """Test mapping networks, dot product, sigmoid and loss against central differences."""
        torch.manual_seed(seed)
        path = ScorePath().double().eval()
        names = [name for name, _ in path.named_parameters()]
        weights = tuple(p.detach().clone().requires_grad_(True) for p in path.parameters())
        candidates = torch.randn(3, 6, dtype=torch.float64, requires_grad=True)
        queries = torch.randn(2, 5, dtype=torch.float64, requires_grad=True)
        labels = (torch.rand(3, 2) > 0.5).double()

        def loss(candidates, queries, *weights):
            parameters = dict(zip(names, weights, strict=True))
            return bce_loss(functional_call(path, parameters, (candidates, queries)), labels)

        assert torch.autograd.gradcheck(
            loss, (candidates, queries, *weights), eps=1e-6, atol=1e-8, rtol=1e-4
        )


class TestAssignRoles:
    """Tests for thresholded argmax assignment."""

    def test_argmax_above_threshold(self):
        """Test the best role wins when it reaches tau."""
        assert assign_roles([0.2, 0.8, 0.6], 0.5, ["A", "B", "C"]) == "B"
        assert assign_roles([0.2, 0.4, 0.3], 0.5, ["A", "B", "C"]) is None

    def test_score_equal_to_threshold(self):
        """Test a score exactly at tau is assigned."""
        assert assign_roles([0.5], 0.5, ["A"]) == "A"

    def test_ties_follow_template_order(self):
        """Test equal scores pick the earlier role."""
        assert assign_roles([0.7, 0.9, 0.9], 0.5, ["A", "B", "C"]) == "B"

    def test_no_roles(self):
        """Test a template without roles assigns nothing."""
        assert assign_roles([], 0.5, []) is None

    def test_invalid(self):
        """Test bad thresholds and mismatched rows."""
        for tau in (0.0, 1.0, 1.5):
            with pytest.raises(ValidationError):
                assign_roles([0.9], tau, ["A"])
        with pytest.raises(ShapeError):
            assign_roles([0.9, 0.1], 0.5, ["A"])

    @settings(max_examples=500)
    @given(row=score_rows, low=thresholds, high=thresholds)
    def test_raising_tau_only_removes(self, row, low, high):
        """Test a higher tau never adds or changes an assignment."""
        low, high = sorted((low, high))
        roles = [f"R{i}" for i in range(len(row))]
        strict = assign_roles(row, high, roles)
        loose = assign_roles(row, low, roles)
        assert strict is None or strict == loose

    @settings(max_examples=500)
    @given(row=score_rows, tau=thresholds)
    def test_assigned_role_is_a_maximum(self, row, tau):
        """Test the assigned role has the top score."""
        roles = [f"R{i}" for i in range(len(row))]
        role = assign_roles(row, tau, roles)
        if role is None:
            assert max(row) < tau
        else:
            assert row[roles.index(role)] == max(row)

    @settings(max_examples=500)
    @given(row=score_rows, tau=thresholds)
    def test_ties_go_to_first_maximum(self, row, tau):
        """Test the earliest of several top-scoring roles wins, on every call."""
        roles = [f"R{i}" for i in range(len(row))]
        tied = row + [max(row)]
        role = assign_roles(tied, tau, [*roles, "Last"])
        assert role == assign_roles(tied, tau, [*roles, "Last"])
        if role is not None:
            assert role == roles[row.index(max(row))]

    @settings(max_examples=500)
    @given(row=score_rows, tau=thresholds, scale=st.sampled_from([0.5, 0.25, 0.125]))
    def test_monotone_transform_keeps_role(self, row, tau, scale):
        """Test rescaling scores and tau together changes no assignment."""
        roles = [f"R{i}" for i in range(len(row))]
        scaled = assign_roles([score * scale for score in row], tau * scale, roles)
        assert scaled == assign_roles(row, tau, roles)


class TestMatchResult:
    """Tests for per-event results."""

    def test_from_scores(self):
        """Test assignments and assigned scores."""
        scores = torch.tensor([[0.9, 0.1], [0.3, 0.4], [0.2, 0.6]])
        result = MatchResult.from_scores("e1", "Contact:Meet", ("Entity", "Place"), scores, 0.5)
        assert result.assignments == ("Entity", None, "Place")
        assert result.prediction_count == 2
        assert result.assigned_score(2) == pytest.approx(0.6)
        assert result.assigned_score(1) is None

    def test_rethreshold_is_monotone(self):
        """Test predicted counts never grow with tau."""
        scores = torch.rand(20, 3, generator=torch.Generator().manual_seed(2))
        result = MatchResult.from_scores("e1", "X", ("A", "B", "C"), scores, 0.1)
        counts = [result.rethreshold(tau / 10).prediction_count for tau in range(1, 10)]
        assert counts == sorted(counts, reverse=True)

    def test_shape_must_fit(self):
        """Test inconsistent results are rejected."""
        with pytest.raises(ValueError, match="do not fit"):
            MatchResult(
                instance_id="e1",
                event_type="X",
                roles=("A",),
                scores=torch.zeros(2, 2),
                assignments=(None, None),
                threshold=0.5,
            )


class TestNetworks:
    """Tests for mapping networks and prototypes."""

    def test_mapping_network_shape(self):
        """Test the hidden layer is four times the output width."""
        network = MappingNetwork(input_width=10, output_width=6)
        assert network.layers[0].out_features == 24
        assert network.layers[2].p == pytest.approx(0.4)
        assert network.eval()(torch.zeros(5, 10)).shape == (5, 6)

    def test_mapping_network_width_check(self):
        """Test inputs of the wrong width."""
        with pytest.raises(ShapeError):
            MappingNetwork(input_width=10, output_width=6)(torch.zeros(2, 11))

    def test_prototypes_shared_across_event_types(self):
        """Test one vector per role name."""
        bank = PrototypeBank(["Place", "Entity", "Place"], width=4)
        assert bank.roles == ("Entity", "Place")
        assert torch.equal(bank.queries(["Place"])[0], bank.vectors[1])
        with pytest.raises(OntologyError):
            bank.queries(["Victim"])


class TestCandidateLabels:
    """Tests for gold matrices."""

    def test_text_labels(self):
        """Test spans must match exactly."""
        labels = candidate_labels(meet_event(), ("Entity", "Place"))
        assert labels.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_image_labels_use_iou(self):
        """Test boxes overlapping a gold box enough are positives."""
        gold = BoundingBox(x_min=0, y_min=0, x_max=10, y_max=10)
        instance = EventInstance(
            instance_id="img1",
            doc_id="doc1",
            modality=Modality.IMAGE,
            event_type="Contact:Meet",
            ontology="m2e2",
            image=ImageRef(
                image_id="img1", canvas=SyntheticCanvas(width=32, height=32, background=(0, 0, 0))
            ),
            object_candidates=(
                CandidateBox(bbox=BoundingBox(x_min=0, y_min=0, x_max=10, y_max=12)),
                CandidateBox(bbox=BoundingBox(x_min=5, y_min=0, x_max=15, y_max=10)),
            ),
            arguments=(GoldArgument(role="Entity", bbox=gold),),
        )
        labels = candidate_labels(instance, ("Entity", "Place"))
        assert labels.tolist() == [[1.0, 0.0], [0.0, 0.0]]
        assert candidate_labels(instance, ("Entity", "Place"), 0.3).tolist()[1] == [1.0, 0.0]


class TestTemplateFillingModel:
    """Tests for the end-to-end model."""

    def test_forward_event(self, small_model_config, m2e2_ontology):
        """Test one score row per candidate and one column per role."""
        model = build_model(small_model_config, m2e2_ontology)
        result = model.forward_event(meet_event())
        assert result.scores.shape == (2, 2)
        assert result.roles == ("Entity", "Place")
        assert ((result.scores > 0) & (result.scores < 1)).all()
        assert result.threshold == 0.5

    def test_image_event(self, small_model_config, small_corpus):
        """Test visual events are scored through the vision encoder."""
        model = build_model(small_model_config, small_corpus.ontology).eval()
        instance = small_corpus.image[0]
        logits = model.score_event(instance)
        roles = small_corpus.ontology.get_event_type(instance.event_type).roles
        assert logits.shape == (instance.candidate_count, len(roles))

    def test_deterministic_build(self, small_model_config, m2e2_ontology):
        """Test equal seeds give equal weights."""
        first = build_model(small_model_config, m2e2_ontology)
        second = build_model(small_model_config, m2e2_ontology)
        assert first.fingerprints() == second.fingerprints()

    def test_unknown_event_type(self, small_model_config, m2e2_ontology):
        """Test events outside the ontology."""
        model = build_model(small_model_config, m2e2_ontology)
        event = meet_event().model_copy(update={"event_type": "Life:Die"})
        with pytest.raises(OntologyError):
            model.forward_event(event)

    def test_no_candidates(self, small_model_config, m2e2_ontology):
        """Test an event without candidates scores nothing."""
        model = build_model(small_model_config, m2e2_ontology)
        event = meet_event().model_copy(update={"entity_candidates": ()})
        assert model.forward_event(event).assignments == ()

    def test_missing_encoder(self, small_model_config, small_corpus):
        """Test image events on a text-only model."""
        config = small_model_config.model_copy(update={"vision_backend": None})
        model = build_model(config, small_corpus.ontology)
        assert model.modalities == (Modality.TEXT,)
        with pytest.raises(ConfigurationError):
            model.forward_event(small_corpus.image[0])

    def test_queries_read_context(self, small_model_config, m2e2_ontology):
        """Test role queries depend on the encoded sentence."""
        model = build_model(small_model_config, m2e2_ontology).eval()
        first = meet_event()
        second = meet_event(words=("Diplomats", "gathered", "at", "Geneva", "today"))
        with torch.no_grad():
            a = model.role_queries(first, model.encode_context(first)).vectors
            b = model.role_queries(second, model.encode_context(second)).vectors
        assert not torch.allclose(a, b)

    def test_no_cross_attention_ignores_context(self, small_model_config, m2e2_ontology):
        """Test queries are context-free when cross-attention is ablated."""
        config = small_model_config.model_copy(
            update={"ablations": AblationConfig(no_cross_attention=True)}
        )
        model = build_model(config, m2e2_ontology).eval()
        first = meet_event()
        second = meet_event(words=("Diplomats", "gathered", "at", "Geneva", "today"))
        with torch.no_grad():
            a = model.role_queries(first, model.encode_context(first)).vectors
            b = model.role_queries(second, model.encode_context(second)).vectors
        assert torch.equal(a, b)

    def test_encoder_only_query_needs_adaptation(self, small_model_config, m2e2_ontology):
        """Test an encoder-only query model must be adapted for cross-attention."""
        backend = BackendConfig(
            family=BackendFamily.ENCODER_ONLY_TEXT, hidden_size=32, cross_attention=False
        )
        config = small_model_config.model_copy(update={"query_backend": backend})
        with pytest.raises(ConfigurationError):
            build_model(config, m2e2_ontology)
        ablated = config.model_copy(update={"ablations": AblationConfig(no_cross_attention=True)})
        assert build_model(ablated, m2e2_ontology).forward_event(meet_event()).roles

    def test_prototypes_replace_queries(self, small_model_config, m2e2_ontology):
        """Test the prompt-free variant has no query model."""
        config = small_model_config.model_copy(
            update={"ablations": AblationConfig(use_prototypes=True)}
        )
        model = build_model(config, m2e2_ontology)
        assert len(model.query_models) == 0
        assert "query_model" not in model.trainable_components()
        assert "prototypes" in model.trainable_components()
        assert "query_model" not in model.modality_components(Modality.TEXT)
        assert model.forward_event(meet_event()).scores.shape == (2, 2)

    def test_modality_specific_query_models(self, small_model_config, m2e2_ontology):
        """Test split prompts own disjoint parameters."""
        config = small_model_config.model_copy(
            update={"ablations": AblationConfig(joint_prompts=False)}
        )
        model = build_model(config, m2e2_ontology)
        text_ids = {id(p) for p in model.component_parameters("query_model")}
        image_ids = {id(p) for p in model.component_parameters("image_query_model")}
        assert text_ids
        assert image_ids
        assert text_ids.isdisjoint(image_ids)
        assert "image_query_model" in model.modality_components(Modality.IMAGE)
        assert "query_model" not in model.modality_components(Modality.IMAGE)

    def test_set_trainable(self, small_model_config, m2e2_ontology):
        """Test freezing whole components."""
        model = build_model(small_model_config, m2e2_ontology)
        model.set_trainable(["vision_encoder", "text_encoder"], False)
        trainable = model.trainable_components()
        assert "vision_encoder" not in trainable
        assert "text_encoder" not in trainable
        assert "query_model" in trainable
        with pytest.raises(ConfigurationError):
            model.set_trainable(["decoder"], False)

    def test_use_ontology(self, small_model_config, m2e2_ontology, small_corpus):
        """Test switching templates keeps the weights."""
        model = build_model(small_model_config, m2e2_ontology)
        before = model.fingerprints()
        model.use_ontology(small_corpus.ontology)
        assert model.fingerprints() == before
        event_type = small_corpus.ontology.event_types[0]
        assert model.prompt_for(event_type.name).text.startswith(event_type.roles[0])
        with pytest.raises(OntologyError):
            model.prompt_for("Contact:Meet")

    def test_enriched_prompts(self, small_model_config, m2e2_ontology):
        """Test the enriched variant renders role definitions."""
        config = small_model_config.model_copy(
            update={"prompt": PromptConfig(variant=PromptVariant.ENRICHED, event_type_prefix=True)}
        )
        model = build_model(config, m2e2_ontology)
        prompt = model.prompt_for("Contact:Meet")
        assert prompt.text.startswith("Contact Meet: Entity (")
        assert model.forward_event(meet_event()).scores.shape == (2, 2)

    def test_describe(self, small_model_config, m2e2_ontology):
        """Test backend identities for manifests."""
        described = build_model(small_model_config, m2e2_ontology).describe()
        assert described["text_encoder"]["hidden_size"] == 32
        assert described["vision_encoder"]["image_size"] == 224
        assert "query_model:joint" in described

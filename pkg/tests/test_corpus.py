"""Tests for corpus records, loaders and the synthetic generator."""

import json

import pytest
import torch
from torchvision.io import write_png

from pyeventfill.config import CorpusSource, Modality, SourceFormat
from pyeventfill.corpus.detections import attach_detections, load_detections
from pyeventfill.corpus.images import load_image, render_canvas, texture_tile
from pyeventfill.corpus.m2e2 import (
    corpus_statistics,
    document_id,
    documents_to_instances,
    load_m2e2,
)
from pyeventfill.corpus.records import (
    BoundingBox,
    CandidateSpan,
    CanvasFill,
    EventInstance,
    GoldArgument,
    ImageRef,
    MultimediaDocument,
    Span,
    SyntheticCanvas,
    fingerprint_instances,
    instance_statistics,
    read_instances,
    write_jsonl,
)
from pyeventfill.corpus.sources import load_source, source_ontology
from pyeventfill.corpus.synthetic import (
    SyntheticSpec,
    chance_f1,
    generate_synthetic,
    load_synthetic_spec,
    oracle_f1,
    synthetic_ontology,
    trigger_word,
)
from pyeventfill.corpus.training_corpora import TrainingFormat, load_training_corpus
from pyeventfill.exceptions import ConfigurationError, DataError, IngestionError, OntologyError
from pyeventfill.ontology.mapping import DROP, OntologyMapping

SENTENCES = [
    {
        "sentence_id": "VOA_1_0",
        "words": ["Troops", "attacked", "the", "village", "with", "rockets", "."],
        "golden-entity-mentions": [
            {"start": 0, "end": 1, "entity_type": "PER"},
            {"start": 2, "end": 4, "entity_type": "GPE"},
            {"start": 5, "end": 6, "entity_type": "WEA"},
        ],
        "golden-event-mentions": [
            {
                "event_type": "Conflict:Attack",
                "trigger": {"start": 1, "end": 2},
                "arguments": [
                    {"role": "Attacker", "start": 0, "end": 1},
                    {"role": "Target", "start": 2, "end": 4},
                    {"role": "Instrument", "start": 5, "end": 6},
                ],
            }
        ],
    },
    {
        "sentence_id": "VOA_2_0",
        "words": ["Leaders", "met", "in", "Paris", "."],
        "golden-entity-mentions": [{"start": 3, "end": 4, "entity_type": "GPE"}],
        "golden-event-mentions": [
            {
                "event_type": "Contact:Meet",
                "trigger": {"start": 1, "end": 2},
                "arguments": [{"role": "Place", "start": 3, "end": 4}],
            }
        ],
    },
]

IMAGES = {
    "VOA_1_1.jpg": {
        "event_type": "Conflict:Attack",
        "role": {
            "Attacker": [["soldier", 10, 20, 110, 220]],
            "Instrument": [["rocket", 150, 40, 200, 90]],
        },
    }
}


@pytest.fixture
def m2e2_dir(tmp_path):
    """One document with a multimedia attack and one text-only meeting."""
    root = tmp_path / "m2e2"
    root.mkdir()
    (root / "text_multimedia_event.json").write_text(json.dumps(SENTENCES))
    (root / "image_multimedia_event.json").write_text(json.dumps(IMAGES))
    (root / "crossmedia_coref.txt").write_text("VOA_1_0\tVOA_1_1.jpg\tConflict:Attack\n")
    return root


def text_instance(**overrides):
    fields = {
        "instance_id": "s1:e0",
        "doc_id": "doc",
        "modality": Modality.TEXT,
        "event_type": "Contact:Meet",
        "ontology": "m2e2",
        "sentence_id": "s1",
        "words": ("Leaders", "met", "in", "Paris", "."),
        "trigger": Span(start=1, end=2),
        "arguments": (GoldArgument(role="Place", span=Span(start=3, end=4)),),
    }
    return EventInstance(**(fields | overrides))


class TestRecords:
    """Tests for normalized records."""

    def test_invalid_geometry(self):
        """Test empty spans and boxes without area."""
        with pytest.raises(ValueError, match="empty"):
            Span(start=2, end=2)
        with pytest.raises(ValueError, match="area"):
            BoundingBox(x_min=5, y_min=0, x_max=5, y_max=10)

    def test_argument_location(self):
        """Test an argument has exactly one of span and box."""
        with pytest.raises(ValueError, match="exactly one"):
            GoldArgument(role="Place")
        with pytest.raises(ValueError, match="exactly one"):
            GoldArgument(
                role="Place",
                span=Span(start=0, end=1),
                bbox=BoundingBox(x_min=0, y_min=0, x_max=1, y_max=1),
            )
        with pytest.raises(ValueError, match="exactly one"):
            ImageRef(image_id="img")

    def test_text_instance_checks(self):
        """Test text mentions need a trigger and spans inside the sentence."""
        with pytest.raises(ValueError, match="trigger"):
            text_instance(trigger=None)
        with pytest.raises(ValueError, match="outside"):
            text_instance(arguments=(GoldArgument(role="Place", span=Span(start=4, end=6)),))
        box = BoundingBox(x_min=0, y_min=0, x_max=1, y_max=1)
        with pytest.raises(ValueError, match="box arguments"):
            text_instance(arguments=(GoldArgument(role="Place", bbox=box),))

    def test_image_instance_checks(self):
        """Test image mentions need an image and no trigger."""
        image = ImageRef(image_id="img", path="img.jpg")
        with pytest.raises(ValueError, match="no trigger"):
            text_instance(modality=Modality.IMAGE, image=image)
        with pytest.raises(ValueError, match="span arguments"):
            text_instance(modality=Modality.IMAGE, image=image, trigger=None, words=())

    def test_gold_candidates(self):
        """Test argument locations stand in for missing annotated candidates."""
        instance = text_instance(entity_candidates=(CandidateSpan(span=Span(start=0, end=1)),))
        swapped = instance.with_gold_candidates()
        assert [c.span for c in swapped.entity_candidates] == [Span(start=3, end=4)]
        assert swapped.candidate_count == 1
        assert not text_instance(arguments=()).has_gold_candidates

    def test_jsonl_round_trip(self, small_corpus, tmp_path):
        """Test instances survive JSON lines and keep their fingerprint."""
        path = tmp_path / "train.jsonl"
        assert write_jsonl(small_corpus.instances, path) == 8
        restored = read_instances(path)
        assert tuple(restored) == small_corpus.instances
        assert fingerprint_instances(restored) == fingerprint_instances(small_corpus.instances)

    def test_fingerprint_sees_changes(self, small_corpus):
        """Test one changed label changes the fingerprint."""
        changed = small_corpus.text[0].model_copy(update={"event_type": "other"})
        assert fingerprint_instances((changed, *small_corpus.text[1:])) != fingerprint_instances(
            small_corpus.text
        )

    def test_invalid_lines(self, tmp_path):
        """Test unreadable files and invalid lines name the file."""
        path = tmp_path / "bad.jsonl"
        path.write_text(text_instance().model_dump_json() + '\n{"instance_id": 1}\n')
        with pytest.raises(IngestionError, match="line 2") as excinfo:
            read_instances(path)
        assert excinfo.value.path == path
        with pytest.raises(IngestionError):
            read_instances(tmp_path / "missing.jsonl")

    def test_document_integrity(self):
        """Test dangling references inside a document."""
        document = MultimediaDocument(doc_id="doc", text_events=(text_instance(),))
        with pytest.raises(DataError, match="unknown sentence"):
            document.validate_integrity()


class TestSynthetic:
    """Tests for the synthetic generator."""

    def test_counts(self):
        """Test events per document and modality."""
        corpus = generate_synthetic(SyntheticSpec(seed=7, num_documents=2))
        assert (len(corpus.text), len(corpus.image)) == (8, 8)
        assert len(corpus.ontology.event_types) == 8

    def test_deterministic(self, small_spec, small_corpus):
        """Test the corpus is a pure function of its SyntheticSpec."""
        assert generate_synthetic(small_spec) == small_corpus

    def test_splits_share_ontology(self, small_spec, small_corpus):
        """Test another split draws new events under the same ontology."""
        other = generate_synthetic(small_spec.for_split("test"))
        assert other.ontology == small_corpus.ontology
        assert other.text != small_corpus.text
        assert all(i.instance_id.startswith("test:") for i in other.instances)

    def test_multimedia_pairs(self, small_corpus):
        """Test paired text and image events share type and id."""
        for text, image in zip(small_corpus.text, small_corpus.image, strict=True):
            assert text.multimedia_id == image.multimedia_id
            assert text.event_type == image.event_type

    def test_events_fit_template(self, small_corpus):
        """Test every gold role belongs to its template and the trigger is planted."""
        for instance in small_corpus.instances:
            event_type = small_corpus.ontology.get_event_type(instance.event_type)
            assert {a.role for a in instance.arguments} <= set(event_type.roles)
            assert instance.candidate_count == small_corpus.spec.candidates_per_event
        for instance in small_corpus.text:
            assert instance.trigger is not None
            trigger = instance.words[instance.trigger.start]
            assert trigger == trigger_word(instance.event_type, small_corpus.spec.seed)

    def test_template_shape(self, small_spec):
        """Test templates start with a role and define every role."""
        for event_type in synthetic_ontology(small_spec).event_types:
            assert event_type.template.raw_text.startswith(f"[{event_type.roles[0]}]")
            assert set(event_type.role_definitions) == set(event_type.roles)

    def test_oracle_recovers_gold(self, small_corpus):
        """Test planted features identify every role at full signal."""
        instances = list(small_corpus.instances)
        assert oracle_f1(instances, small_corpus.ontology, small_corpus.spec.seed) == 1.0
        assert 0.0 < chance_f1(small_corpus) < 1.0

    def test_invalid_specs(self):
        """Test inconsistent counts."""
        with pytest.raises(ValueError, match="min_roles"):
            SyntheticSpec(min_roles=4, max_roles=3)
        with pytest.raises(ValueError, match="fill a role"):
            SyntheticSpec(candidates_per_event=2, distractors_per_event=2)
        with pytest.raises(ValueError):
            SyntheticSpec(image_size=128)

    def test_spec_file(self, tmp_path):
        """Test spec files are read and invalid ones refused."""
        path = tmp_path / "spec.yaml"
        path.write_text("seed: 4\nnum_documents: 3\n")
        assert load_synthetic_spec(path) == SyntheticSpec(seed=4, num_documents=3)
        path.write_text("num_documents: 0\n")
        with pytest.raises(ConfigurationError):
            load_synthetic_spec(path)


class TestM2E2:
    """Tests for the M2E2 loader."""

    def test_document_id(self):
        """Test document ids drop the running index and extension."""
        assert document_id("VOA_EN_NW_2017.04.03.3793935_9") == "VOA_EN_NW_2017.04.03.3793935"
        assert document_id("VOA_1_1.jpg") == "VOA_1"

    def test_load(self, m2e2_dir):
        """Test documents, events and the multimedia alignment."""
        documents = load_m2e2(m2e2_dir)
        assert [d.doc_id for d in documents] == ["VOA_1", "VOA_2"]
        assert corpus_statistics(documents) == {
            "documents": 2,
            "sentences": 2,
            "images": 1,
            "text_events": 2,
            "image_events": 1,
            "multimedia_events": 1,
        }
        attack = documents[0]
        assert attack.multimedia_events == (("VOA_1_0:e0", "VOA_1_1.jpg"),)
        assert attack.text_events[0].multimedia_id == "VOA_1_0:e0|VOA_1_1.jpg"
        assert attack.image_events[0].multimedia_id == "VOA_1_0:e0|VOA_1_1.jpg"

    def test_split_statistics(self, m2e2_dir):
        """Test counts taken from the instances agree with the document counts."""
        documents = load_m2e2(m2e2_dir)
        counts = instance_statistics(documents_to_instances(documents))
        assert counts == corpus_statistics(documents)

    def test_instances(self, m2e2_dir):
        """Test flattening puts text first and keeps candidates."""
        instances = documents_to_instances(load_m2e2(m2e2_dir))
        assert [i.modality for i in instances] == [Modality.TEXT, Modality.TEXT, Modality.IMAGE]
        attack, _, image = instances
        assert len(attack.entity_candidates) == 3
        assert {a.role for a in image.arguments} == {"Attacker", "Instrument"}
        assert image.arguments[0].bbox == BoundingBox(x_min=10, y_min=20, x_max=110, y_max=220)
        assert len(image.gold_objects) == 2

    def test_no_files(self, tmp_path):
        """Test an empty directory."""
        with pytest.raises(DataError, match="No M2E2"):
            load_m2e2(tmp_path)

    def test_broken_coref(self, m2e2_dir):
        """Test alignments must reference existing events."""
        coref = m2e2_dir / "crossmedia_coref.txt"
        coref.write_text("VOA_1_0\tVOA_1_1.jpg\tLife:Die\n")
        with pytest.raises(DataError, match="line 1"):
            load_m2e2(m2e2_dir)
        coref.write_text("VOA_1_0\tVOA_1_1.jpg\n")
        with pytest.raises(DataError, match="three"):
            load_m2e2(m2e2_dir)

    def test_malformed_files(self, m2e2_dir):
        """Test records missing keys and files that are not JSON."""
        (m2e2_dir / "text_only_event.json").write_text(json.dumps([{"sentence_id": "VOA_3_0"}]))
        with pytest.raises(DataError, match="VOA_3_0"):
            load_m2e2(m2e2_dir)
        (m2e2_dir / "text_only_event.json").write_text("not json")
        with pytest.raises(IngestionError):
            load_m2e2(m2e2_dir)


class TestTrainingCorpora:
    """Tests for ACE-, SWiG- and FrameNet-like corpora."""

    @pytest.fixture
    def swig_file(self, tmp_path):
        path = tmp_path / "swig.json"
        path.write_text(
            json.dumps(
                {
                    "attacking_1.jpg": {
                        "verb": "attacking",
                        "frames": [{"agent": "n1", "victim": "n2", "place": "n3"}],
                        "bb": {
                            "agent": [0, 0, 50, 50],
                            "victim": [60, 60, 120, 120],
                            "place": [-1, -1, -1, -1],
                            "tool": [10, 10, 20, 30],
                        },
                    },
                    "cooking_1.jpg": {"verb": "cooking", "frames": [], "bb": {}},
                    "running_1.jpg": {"verb": "running", "frames": [], "bb": {}},
                }
            )
        )
        return path

    @pytest.fixture
    def swig_mapping(self):
        return OntologyMapping(
            source_ontology="swig",
            target_ontology="m2e2",
            event_map={"attacking": "Conflict:Attack", "cooking": DROP},
            role_map={"attacking": {"agent": "Attacker", "victim": "Target", "*": DROP}},
        )

    def test_ace_like(self, tmp_path, m2e2_ontology):
        """Test sentence records under the identity mapping."""
        path = tmp_path / "ace.jsonl"
        path.write_text("\n".join(json.dumps(record) for record in SENTENCES) + "\n")
        corpus = load_training_corpus(
            path, TrainingFormat.ACE_LIKE, OntologyMapping.identity(m2e2_ontology), m2e2_ontology
        )
        assert [i.instance_id for i in corpus.instances] == ["VOA_1_0:e0", "VOA_2_0:e0"]
        assert corpus.instances[0].doc_id == "VOA_1"
        assert corpus.instances[0].source == "ace_like"
        assert len(corpus.instances[0].arguments) == 3

    def test_swig_like(self, swig_file, swig_mapping, m2e2_ontology):
        """Test relabeling, dropping and skipping invisible roles."""
        corpus = load_training_corpus(
            swig_file, TrainingFormat.SWIG_LIKE, swig_mapping, m2e2_ontology, strict=False
        )
        assert (corpus.dropped, corpus.skipped) == (1, 1)
        (attack,) = corpus.instances
        assert attack.event_type == "Conflict:Attack"
        assert attack.ontology == "m2e2"
        assert [a.role for a in attack.arguments] == ["Attacker", "Target"]
        # the tool box stays a candidate without a role
        assert len(attack.object_candidates) == 3

    def test_strict_unmapped(self, swig_file, swig_mapping, m2e2_ontology):
        """Test strict mode refuses events without a mapping rule."""
        with pytest.raises(DataError, match="running"):
            load_training_corpus(swig_file, TrainingFormat.SWIG_LIKE, swig_mapping, m2e2_ontology)

    def test_framenet_like(self, tmp_path, m2e2_ontology):
        """Test frame records become text events."""
        path = tmp_path / "frames.jsonl"
        record = {
            "sentence_id": "fn_7",
            "words": ["Rebels", "stormed", "the", "base", "."],
            "frame": "Attack",
            "target": [1, 2],
            "frame_elements": [
                {"name": "Assailant", "start": 0, "end": 1},
                {"name": "Victim", "start": 2, "end": 4},
            ],
        }
        path.write_text(json.dumps(record) + "\n")
        mapping = OntologyMapping(
            source_ontology="framenet",
            target_ontology="m2e2",
            event_map={"Attack": "Conflict:Attack"},
            role_map={"Attack": {"Assailant": "Attacker", "Victim": "Target"}},
        )
        (instance,) = load_training_corpus(
            path, TrainingFormat.FRAMENET_LIKE, mapping, m2e2_ontology
        ).instances
        assert instance.trigger == Span(start=1, end=2)
        assert [(a.role, a.span) for a in instance.arguments] == [
            ("Attacker", Span(start=0, end=1)),
            ("Target", Span(start=2, end=4)),
        ]

    def test_mapping_targets_checked(self, swig_file, m2e2_ontology):
        """Test mappings into labels the ontology lacks."""
        mapping = OntologyMapping(
            source_ontology="swig",
            target_ontology="m2e2",
            event_map={"attacking": "Life:Die"},
            role_map={},
        )
        with pytest.raises(OntologyError):
            load_training_corpus(swig_file, TrainingFormat.SWIG_LIKE, mapping, m2e2_ontology)


class TestDetections:
    """Tests for detector and recognizer outputs."""

    @pytest.fixture
    def detections_file(self, tmp_path):
        path = tmp_path / "detector.jsonl"
        lines = [
            {
                "image_id": "VOA_1_1.jpg",
                "bbox": [10, 20, 110, 220],
                "label": "person",
                "confidence": 0.9,
            },
            {"image_id": "VOA_1_1.jpg", "bbox": [0, 0, 5, 5], "confidence": 0.1},
            {"sentence_id": "VOA_1_0", "span": [0, 1], "head": 0, "label": "PER"},
            {"sentence_id": "VOA_1_0", "span": [5, 9]},
        ]
        path.write_text("\n".join(json.dumps(line) for line in lines) + "\n")
        return path

    def test_load(self, detections_file):
        """Test boxes and spans are keyed by image and sentence."""
        detections = load_detections(detections_file)
        assert detections.provenance == "detector.jsonl"
        assert len(detections.boxes["VOA_1_1.jpg"]) == 2
        assert detections.spans["VOA_1_0"][0].head == 0

    def test_attach(self, detections_file, m2e2_dir):
        """Test detections replace candidates and record their provenance."""
        instances = documents_to_instances(load_m2e2(m2e2_dir))
        attached = attach_detections(instances, load_detections(detections_file), 0.5)
        attack, meet, image = attached
        # the second span runs past the sentence end
        assert [c.span for c in attack.entity_candidates] == [Span(start=0, end=1)]
        assert meet.entity_candidates == ()
        assert [c.confidence for c in image.object_candidates] == [0.9]
        assert image.source == "m2e2+detector.jsonl"

    def test_malformed(self, tmp_path):
        """Test bad records name their line."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"image_id": "x", "bbox": [5, 5, 1, 1]}\n')
        with pytest.raises(IngestionError, match="line 1"):
            load_detections(path)


class TestSources:
    """Tests for resolving configured corpus sources."""

    def test_infer(self, tmp_path):
        """Test bare paths map to formats by suffix."""
        assert CorpusSource.infer(tmp_path / "a.jsonl").format is SourceFormat.JSONL
        assert CorpusSource.infer(tmp_path / "a.yaml").format is SourceFormat.SYNTHETIC

    def test_missing_path(self, tmp_path, m2e2_ontology):
        """Test sources that do not exist."""
        with pytest.raises(ConfigurationError, match="does not exist"):
            load_source(CorpusSource(path=tmp_path / "absent.jsonl"), m2e2_ontology)

    def test_synthetic_split(self, tmp_path):
        """Test synthetic sources generate the requested split."""
        path = tmp_path / "spec.yaml"
        path.write_text("seed: 3\nnum_documents: 2\nevents_per_document: 2\nnum_event_types: 3\n")
        source = CorpusSource(path=path, format=SourceFormat.SYNTHETIC)
        ontology = source_ontology(source)
        assert ontology is not None
        instances = load_source(source, ontology, split="selection")
        assert len(instances) == 8
        assert all(i.instance_id.startswith("selection:") for i in instances)

    def test_m2e2_source(self, m2e2_dir, m2e2_ontology):
        """Test the benchmark layout as a source."""
        source = CorpusSource(path=m2e2_dir, format=SourceFormat.M2E2)
        assert source_ontology(source) is None
        assert len(load_source(source, m2e2_ontology)) == 3

    def test_event_type_outside_ontology(self, small_corpus, tmp_path, m2e2_ontology):
        """Test instances must belong to the active ontology."""
        path = tmp_path / "synthetic.jsonl"
        write_jsonl(small_corpus.text, path)
        with pytest.raises(OntologyError, match="outside ontology"):
            load_source(CorpusSource(path=path), m2e2_ontology)


class TestImages:
    """Tests for image loading."""

    def canvas(self):
        fill = CanvasFill(
            bbox=BoundingBox(x_min=16, y_min=16, x_max=48, y_max=32), pattern_seed=5
        )
        return SyntheticCanvas(width=64, height=48, background=(10, 20, 30), fills=(fill,))

    def test_render_canvas(self):
        """Test background and a tiled fill."""
        pixels = render_canvas(self.canvas())
        assert pixels.shape == (3, 48, 64)
        assert pixels.dtype == torch.uint8
        assert pixels[:, 0, 0].tolist() == [10, 20, 30]
        tile = torch.from_numpy(texture_tile(5)).permute(2, 0, 1)
        assert torch.equal(pixels[:, 16:32, 16:32], tile)
        assert torch.equal(pixels[:, 16:32, 32:48], tile)

    def test_load_canvas(self):
        """Test canvas references render."""
        image = load_image(ImageRef(image_id="c", canvas=self.canvas()))
        assert torch.equal(image, render_canvas(self.canvas()))

    def test_load_file(self, tmp_path):
        """Test image files resolve against a root directory."""
        pixels = torch.randint(0, 256, (3, 20, 30), dtype=torch.uint8)
        write_png(pixels, str(tmp_path / "img.png"))
        image = load_image(ImageRef(image_id="img", path="img.png"), root=tmp_path)
        assert torch.equal(image, pixels)

    def test_missing_file(self, tmp_path):
        """Test unreadable images."""
        with pytest.raises(IngestionError):
            load_image(ImageRef(image_id="img", path="absent.png"), root=tmp_path)

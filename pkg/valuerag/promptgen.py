"""
Prompt assembly and fine-tuning record export

A prompt has five sections, in order: task description, note, reference
products of the same category, product information and candidate
attribute values. Section text comes from a configobj template resource.
"""

import os
import math
import random

from collections import namedtuple, OrderedDict

from configobj import ConfigObj, ConfigObjError

from valuerag.corpus import render_query
from valuerag.log import Logger
from valuerag.retrieval import FewShotExample
from valuerag.taxonomy import NULL_MARKER

DEFAULT_TEMPLATE = os.path.join(os.path.dirname(__file__), 'templates', 'prompt.ini')
SECTIONS = ('task', 'note', 'shots', 'product', 'candidates')

Provenance = namedtuple('Provenance', ['product', 'shots', 'candidates'])


class PromptError(Exception):
    def __str__(self):
        return self.args[0]


class MalformedSectionError(PromptError):
    pass


class SchemaMismatchError(PromptError):
    pass


class NoLabelsError(PromptError):
    pass


class NoEligibleAttributeError(PromptError):
    pass


def single_line(text):
    return ' '.join(text.split())


class PromptTemplate(object):
    """
    Versioned prompt text loaded from an INI resource
    """
    def __init__(self, path=None):
        self.path = path or DEFAULT_TEMPLATE
        if not os.path.isfile(self.path):
            raise PromptError('No such prompt template: %s' % self.path)
        try:
            config = ConfigObj(self.path, encoding='utf-8', file_error=True)
        except (ConfigObjError, IOError) as emsg:
            raise PromptError('Error reading prompt template %s: %s' % (self.path, emsg))

        try:
            self.version = config['version']
            self.headers = OrderedDict((name, config['headers'][name]) for name in SECTIONS)
            self.task = config['text']['task']
            self.no_shots = config['text']['no_shots']
            self.notes = [config['notes'][key] for key in config['notes']]
            labels = config['labels']
            self.description_label = labels['description']
            self.category_label = labels['category']
            self.attribute_value_label = labels['attribute_value']
            self.attribute_collection_label = labels['attribute_collection']
        except KeyError as emsg:
            raise PromptError('Prompt template %s is missing %s' % (self.path, emsg))

        if len(set(self.headers.values())) != len(SECTIONS):
            raise PromptError('Prompt template %s has duplicate section headers' % self.path)

    @property
    def identity(self):
        return 'prompt-template:%s@%s' % (os.path.basename(self.path), self.version)

    def render_note(self):
        return '\n'.join('%d. %s' % (i, note) for i, note in enumerate(self.notes, 1))

    def render(self, task_description, note, few_shots, product_block, candidate_block):
        bodies = (
            task_description,
            note,
            few_shots and '\n\n'.join(few_shots) or self.no_shots,
            product_block,
            candidate_block,
        )
        return '\n\n'.join(
            '%s\n%s' % (header, body) for header, body in zip(self.headers.values(), bodies)
        ) + '\n'


_default_templates = []


def default_template():
    if not _default_templates:
        _default_templates.append(PromptTemplate())
    return _default_templates[0]


class PromptBundle(object):
    """
    The five prompt sections, the rendered prompt and, for assembled
    bundles, the structured inputs they were rendered from
    """
    def __init__(self, task_description, note, few_shots, product_block, candidate_block,
                 template=None, provenance=None):
        self.template = template or default_template()
        self.task_description = task_description
        self.note = note
        self.few_shots = list(few_shots)
        self.product_block = product_block
        self.candidate_block = candidate_block
        self.provenance = provenance
        self.rendered = self.template.render(
            task_description, note, self.few_shots, product_block, candidate_block
        )

    def __eq__(self, other):
        if not isinstance(other, PromptBundle):
            return NotImplemented
        return self.sections() == other.sections()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return '<PromptBundle %d shots, %d chars>' % (len(self.few_shots), len(self.rendered))

    def sections(self):
        return (
            self.task_description,
            self.note,
            tuple(self.few_shots),
            self.product_block,
            self.candidate_block,
        )

    @property
    def attributes(self):
        """
        Attribute collection of the product, in schema order
        """
        if self.provenance is not None:
            return list(self.provenance.candidates.keys())
        prefix = '%s: ' % self.template.attribute_collection_label
        for line in self.product_block.split('\n'):
            if line.startswith(prefix):
                return [a for a in line[len(prefix):].split(', ') if a]
        raise MalformedSectionError('Product block has no %s line' % self.template.attribute_collection_label)


def render_product_lines(template, product):
    return [
        '%s: %s' % (template.description_label, single_line(render_query(product))),
        '%s: %s' % (template.category_label, product.category),
    ]


def render_shot(template, shot):
    lines = render_product_lines(template, shot.product)
    lines.append('%s:' % template.attribute_value_label)
    lines.extend('%s: %s' % (attribute, value) for attribute, value in shot.rendered_labels.items())
    return '\n'.join(lines)


def candidate_values(candidate_set):
    return list(getattr(candidate_set, 'values', candidate_set))


def assemble_prompt(product, shots, candidates, taxonomy, template=None):
    """
    Render the five-section prompt for product
    """
    template = template or default_template()
    schema = taxonomy.attribute_set(product.category)

    foreign = [attribute for attribute in candidates if attribute not in schema]
    if foreign:
        raise SchemaMismatchError('Candidates for %s reference attributes outside %s: %s' % (
            product.id, product.category, ', '.join(foreign)
        ))
    for shot in shots:
        if shot.product.category != product.category:
            raise SchemaMismatchError('Reference product %s is in %s, not %s' % (
                shot.product.id, shot.product.category, product.category
            ))

    ordered = OrderedDict(
        (attribute, candidates.get(attribute, [NULL_MARKER])) for attribute in schema
    )
    return render_bundle(product, shots, ordered, template)


def render_bundle(product, shots, ordered, template):
    """
    Render a bundle from candidates already covering the schema, in order
    """
    product_lines = render_product_lines(template, product)
    product_lines.append('%s: %s' % (template.attribute_collection_label, ', '.join(ordered)))
    candidate_lines = [
        '%s: %s' % (attribute, ', '.join(candidate_values(values)))
        for attribute, values in ordered.items()
    ]

    return PromptBundle(
        task_description=template.task,
        note=template.render_note(),
        few_shots=[render_shot(template, shot) for shot in shots],
        product_block='\n'.join(product_lines),
        candidate_block='\n'.join(candidate_lines),
        template=template,
        provenance=Provenance(product, list(shots), ordered),
    )


def parse_prompt_sections(rendered, template=None):
    """
    Recover the five sections of a rendered prompt
    """
    template = template or default_template()
    headers = list(template.headers.values())

    if not rendered.endswith('\n'):
        raise MalformedSectionError('Prompt does not end with a newline')

    spans = []
    position = 0
    for i, header in enumerate(headers):
        if i == 0:
            marker = '%s\n' % header
            found = 0 if rendered.startswith(marker) else -1
        else:
            marker = '\n\n%s\n' % header
            found = rendered.find(marker, position)
        if found < 0:
            raise MalformedSectionError('Missing section header: %s' % header)
        spans.append((found, found + len(marker)))
        position = found + len(marker)

    bodies = []
    for i, (start, body_start) in enumerate(spans):
        body_end = i + 1 < len(spans) and spans[i + 1][0] or len(rendered) - 1
        bodies.append(rendered[body_start:body_end])

    task, note, shots_body, product_block, candidate_block = bodies
    few_shots = shots_body != template.no_shots and shots_body.split('\n\n') or []
    bundle = PromptBundle(task, note, few_shots, product_block, candidate_block, template=template)
    if bundle.rendered != rendered:
        raise MalformedSectionError('Prompt sections do not reproduce the rendered text')
    return bundle


def target_value(values):
    """
    Single supervision value: smallest ground-truth value, else null marker
    """
    return values and min(values) or NULL_MARKER


class SftRecord(object):
    """
    Prompt/target pair; loss is computed from loss_mask_boundary onwards
    """
    def __init__(self, prompt, target, product_id, is_ood_sample=False,
                 loss_mask_boundary=None, ood_attribute=None):
        self.prompt = prompt
        self.target = target
        self.product_id = product_id
        self.is_ood_sample = is_ood_sample
        self.ood_attribute = ood_attribute
        if loss_mask_boundary is None:
            loss_mask_boundary = len(prompt)
        self.loss_mask_boundary = loss_mask_boundary

    def __repr__(self):
        return '<SftRecord %s%s>' % (self.product_id, self.is_ood_sample and ' ood' or '')

    @property
    def text(self):
        return self.prompt + self.target

    def split(self):
        return self.text[:self.loss_mask_boundary], self.text[self.loss_mask_boundary:]

    def to_record(self):
        record = OrderedDict((
            ('product_id', self.product_id),
            ('prompt', self.prompt),
            ('target', self.target),
            ('loss_mask_boundary', self.loss_mask_boundary),
            ('is_ood_sample', self.is_ood_sample),
        ))
        if self.ood_attribute is not None:
            record['ood_attribute'] = self.ood_attribute
        return record

    @classmethod
    def from_record(cls, record):
        return cls(
            prompt=record['prompt'],
            target=record['target'],
            product_id=record['product_id'],
            is_ood_sample=record.get('is_ood_sample', False),
            loss_mask_boundary=record['loss_mask_boundary'],
            ood_attribute=record.get('ood_attribute'),
        )


def render_target(product, attributes):
    return '\n'.join(
        '%s: %s' % (attribute, target_value(product.ground_truth(attribute)))
        for attribute in attributes
    )


def build_sft_record(product, bundle):
    """
    Fine-tuning record with the ground truth as target
    """
    if not product.labels:
        raise NoLabelsError('Product %s has no ground-truth labels' % product.id)
    return SftRecord(bundle.rendered, render_target(product, bundle.attributes), product.id)


def build_ood_sample(product, bundle):
    """
    Record whose context hides the ground truth of one attribute

    The first attribute in schema order with a ground-truth value among its
    candidates is chosen; its ground-truth values are removed from the
    candidates and replaced by the null marker in reference product labels.
    """
    if bundle.provenance is None:
        raise PromptError('Bundle for %s carries no retrieval context' % product.id)
    source, shots, candidates = bundle.provenance

    chosen = None
    for attribute, values in candidates.items():
        truth = product.ground_truth(attribute)
        if truth and truth.intersection(candidate_values(values)):
            chosen = attribute
            break
    if chosen is None:
        raise NoEligibleAttributeError('Product %s has no ground-truth value among its candidates' % product.id)

    truth = product.ground_truth(chosen)
    hidden = OrderedDict(candidates)
    values = candidates[chosen]
    if hasattr(values, 'without'):
        hidden[chosen] = values.without(truth)
    else:
        hidden[chosen] = [v for v in values if v not in truth] or [NULL_MARKER]
    hidden_shots = []
    for shot in shots:
        labels = OrderedDict(shot.rendered_labels)
        if labels.get(chosen) in truth:
            labels[chosen] = NULL_MARKER
        hidden_shots.append(FewShotExample(shot.product, labels))

    rebuilt = render_bundle(source, hidden_shots, hidden, bundle.template)
    return SftRecord(
        rebuilt.rendered,
        render_target(product, rebuilt.attributes),
        product.id,
        is_ood_sample=True,
        ood_attribute=chosen,
    )


def corrupt_shot_labels(shots, fraction, taxonomy):
    """
    Replace every label of the first floor(fraction * len(shots)) reference
    products with a different taxonomy value
    """
    count = int(math.floor(fraction * len(shots) + 1e-9))
    corrupted = []
    for position, shot in enumerate(shots):
        if position >= count:
            corrupted.append(shot)
            continue
        labels = OrderedDict()
        for attribute, current in shot.rendered_labels.items():
            others = [v for v in taxonomy.values_of(shot.product.category, attribute) if v != current]
            labels[attribute] = others and others[0] or NULL_MARKER
        corrupted.append(FewShotExample(shot.product, labels))
    return corrupted


def export_sft(products, retriever, taxonomy, ood_ratio=0.0, seed=0, template=None, shot_noise=0.0):
    """
    Fine-tuning records for every labeled product, plus OOD samples for a
    seeded ood_ratio share of the eligible products
    """
    log = Logger('promptgen').default_stream
    rng = random.Random(seed)
    regular = []
    eligible = []
    for product in products:
        if not product.labels:
            continue
        candidates, shots = retriever.retrieve(product)
        if shot_noise:
            shots = corrupt_shot_labels(shots, shot_noise, taxonomy)
        bundle = assemble_prompt(product, shots, candidates, taxonomy, template=template)
        regular.append((product, bundle))
        if any(
            (product.ground_truth(a) or frozenset()).intersection(c.real_values)
            for a, c in candidates.items()
        ):
            eligible.append(product.id)

    chosen = set(rng.sample(eligible, int(round(ood_ratio * len(eligible)))))
    records = []
    for product, bundle in regular:
        records.append(build_sft_record(product, bundle))
        if product.id in chosen:
            records.append(build_ood_sample(product, bundle))

    log.info('exported %d records, %d OOD samples out of %d eligible products' % (
        len(records), len(chosen), len(eligible)
    ))
    return records

"""
Seeded synthetic taxonomy, corpus and reference pool

Values are pronounceable nonsense words so retrieval has to work from the
product text. The same settings and seed always produce the same files.
"""

import random
from collections import namedtuple

from valuerag.corpus import LabelValue, Product, serialize_products
from valuerag.log import Logger
from valuerag.taxonomy import NULL_MARKER, Taxonomy, serialize_taxonomy

CONSONANTS = 'bdfgklmnprstvz'
VOWELS = 'aeiou'
RESERVED_WORDS = (NULL_MARKER.lower(), 'unknown')
MAX_WORD_ATTEMPTS = 10000

DEFAULT_SETTINGS = {
    'categories': 5,
    'products': 200,
    'attributes': 3,
    'values': 8,
    'pool_fraction': 0.5,
    'noise': 0.1,
    'null_fraction': 0.2,
    'ood_fraction': 0.0,
    'unannotated_fraction': 0.0,
}

SynthDataset = namedtuple('SynthDataset', ['taxonomy', 'corpus', 'pool'])


class SynthError(Exception):
    def __str__(self):
        return self.args[0]


class WordSource(object):
    """
    Unique pronounceable words from a seeded generator
    """
    def __init__(self, rng):
        self.rng = rng
        self.used = set()

    def word(self, syllables=2):
        for _ in range(MAX_WORD_ATTEMPTS):
            word = ''.join(
                self.rng.choice(CONSONANTS) + self.rng.choice(VOWELS)
                for _ in range(syllables)
            )
            if word in self.used or word in RESERVED_WORDS:
                continue
            self.used.add(word)
            return word
        raise SynthError('Ran out of %d-syllable words' % syllables)

    def filler(self, syllables=2):
        """
        A word that may repeat; never a reserved word
        """
        while True:
            word = ''.join(
                self.rng.choice(CONSONANTS) + self.rng.choice(VOWELS)
                for _ in range(syllables)
            )
            if word not in RESERVED_WORDS:
                return word


def synth_taxonomy(words, categories, attributes, values):
    entries = []
    for _ in range(categories):
        category = words.word(2).capitalize()
        for _ in range(attributes):
            attribute = words.word(2).capitalize()
            entries.append((category, attribute, [words.word(3) for _ in range(values)]))
    return Taxonomy(entries)


def synth_product(rng, words, taxonomy, category, product_id, settings):
    """
    One product whose text mentions most of its ground truth values
    """
    labels = {}
    title_words = [category.lower()]
    sentences = []

    for attribute in taxonomy.attribute_set(category):
        if rng.random() < settings['unannotated_fraction']:
            continue
        if rng.random() < settings['null_fraction']:
            labels[attribute] = ()
            continue

        values = taxonomy.values_of(category, attribute)
        if rng.random() < settings['ood_fraction']:
            label = LabelValue(words.word(3), False)
        else:
            label = LabelValue(rng.choice(values), True)
        labels[attribute] = (label,)

        mentioned = label.value
        if rng.random() < settings['noise']:
            others = [value for value in values if value != label.value]
            if not others:
                continue
            mentioned = rng.choice(others)
        if rng.random() < 0.5:
            title_words.append(mentioned)
        else:
            sentences.append('%s %s.' % (attribute.lower(), mentioned))

    title_words.append(words.filler(2))
    return Product(
        id=product_id,
        title=' '.join(title_words),
        description=' '.join(sentences),
        category=category,
        labels=labels,
    )


def synthesize(settings=None, seed=0):
    """
    Build a taxonomy, an evaluation corpus and a disjoint reference pool
    """
    merged = dict(DEFAULT_SETTINGS)
    merged.update(settings or {})
    rng = random.Random(seed)
    words = WordSource(rng)

    taxonomy = synth_taxonomy(words, merged['categories'], merged['attributes'], merged['values'])
    categories = taxonomy.categories

    def products(prefix, count):
        return [
            synth_product(rng, words, taxonomy, rng.choice(categories), '%s-%05d' % (prefix, index), merged)
            for index in range(count)
        ]

    corpus = products('p', merged['products'])
    pool = products('ref', int(round(merged['products'] * merged['pool_fraction'])))
    return SynthDataset(taxonomy, corpus, pool)


def write_dataset(dataset, taxonomy_path, corpus_path, pool_path):
    log = Logger('synth').default_stream
    serialize_taxonomy(dataset.taxonomy, taxonomy_path)
    serialize_products(dataset.corpus, corpus_path)
    serialize_products(dataset.pool, pool_path)
    log.info('wrote %d categories, %d products and %d reference products' % (
        len(dataset.taxonomy.categories), len(dataset.corpus), len(dataset.pool)
    ))

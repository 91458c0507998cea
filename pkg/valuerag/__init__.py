"""
Retrieval augmented product attribute value identification
"""

__all__ = [
    'cli', 'config', 'corpus', 'embedding', 'evaluation', 'files', 'generation',
    'log', 'promptgen', 'request', 'retrieval', 'shell', 'sqlite', 'synth', 'taxonomy',
]

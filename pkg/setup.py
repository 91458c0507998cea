import os,glob
from setuptools import setup,find_packages

VERSION='1.0.0'
README = open(os.path.join(os.path.dirname(__file__),'README.md'),'r').read()

setup(
    name = 'valuerag',
    version = VERSION,
    license = 'PSF',
    keywords = 'Product Attribute Value Retrieval LLM',
    zip_safe = False,
    scripts = glob.glob('bin/*'),
    packages = ['valuerag'] + ['valuerag.%s'%s for s in find_packages('valuerag')],
    package_data = {'valuerag': ['templates/*.ini']},
    description = 'Retrieval augmented product attribute value identification',
    long_description = README,
    long_description_content_type = 'text/markdown',
    python_requires = '>=3.6',
    install_requires = (
        'requests>=2.20',
        'urllib3>=1.26',
        'configobj>=5.0.6',
        'setproctitle',
        'numpy',
    ),
    tests_require = (
        'nose2',
    ),
    test_suite = 'test',
)

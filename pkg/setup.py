#!/usr/bin/env python


import io, os, re

from setuptools import setup

version_number_re = r"\s*__version__\s*=\s*((\"([^\"]|\\\\\")*\"|'([^']|\\\\')*'))"
version_file = os.path.join(os.path.dirname(__file__), 'mcmcdb', '__init__.py')
with io.open(version_file, encoding='utf-8') as f:
    version_number = re.search(version_number_re, f.read()).groups()[0][1:-1]

setup(
    name='mcmcdb',
    version=version_number,
    description='Query evaluation in probabilistic databases by MCMC sampling',
    long_description=io.open(os.path.join(os.path.dirname(__file__), 'README.rst'),
                             encoding='utf-8').read(),
    packages=['mcmcdb'],
    package_data={'mcmcdb': ['skipchain.xml']},
    install_requires=['lxml', 'six', 'numpy>=1.17', 'joblib', 'tqdm', 'pyparsing>=3'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['mcmcdb = mcmcdb.cli:main']},
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Database',
        'Topic :: Scientific/Engineering :: Artificial Intelligence'],
    )

import os
from setuptools import setup, find_packages


def read(file):
    return open(os.path.join(os.path.dirname(__file__), file)).read()


setup(
    name='omrn',
    version='0.1.0',
    description='Object-aware Multi-branch Relation Network for spatio-temporal video grounding',
    long_description=read('README.md'),
    long_description_content_type='text/markdown',
    keywords='video grounding spatio-temporal tube localization natural language deep learning',
    license='Apache-2.0',
    packages=find_packages(exclude=['tests']),
    install_requires=read('requirements.txt').split(),
    entry_points={'console_scripts': ['omrn=omrn.cli:main']}
)

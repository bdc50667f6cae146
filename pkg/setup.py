# coding=utf-8

from setuptools import find_namespace_packages, setup


setup(
    name='qaccel',
    version='0.1.0',
    description='Software twin of a fixed-point neural Q-learning accelerator',
    packages=find_namespace_packages(include=['data_structure*', 'environment*', 'model*', 'trainer*',
                                              'eval*', 'utils*']),
    py_modules=['main'],
    python_requires='>=3.8',
    install_requires=[line.strip() for line in open('requirements.txt', encoding='utf-8') if line.strip()],
    entry_points={'console_scripts': ['qaccel=main:main']},
)

from setuptools import find_packages, setup


def readme():
    with open('README.md') as f:
        content = f.read()
    return content


def find_version():
    version_file = 'ampprune/__init__.py'
    with open(version_file, 'r') as f:
        exec(compile(f.read(), version_file, 'exec'))
    return locals()['__version__']


setup(
    name='ampprune',
    version=find_version(),
    description='Structured pruning of attention heads and MLP neurons by activation magnitude',
    license='MIT',
    long_description=readme(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    py_modules=['default_config', 'main'],
    install_requires=[
        'numpy',
        'torch>=1.10',
        'yacs',
        'tensorboard'
    ],
    extras_require={
        'test': ['pytest']
    },
    entry_points={
        'console_scripts': ['ampprune=main:main']
    },
    keywords=[
        'Structured Pruning',
        'Large Language Models',
        'Model Compression'
    ]
)

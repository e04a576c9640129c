"""
Setup configuration for the OTT DID method
Installs the library modules, the gateway and the `ott` command
"""

from setuptools import setup


# Read the requirements file
def read_requirements():
    with open('requirements.txt', 'r') as f:
        return [line.split('#')[0].strip() for line in f
                if line.strip() and not line.startswith('#')
                and not line.startswith(('pytest', 'hypothesis'))]


# Read the README file
def read_readme():
    with open('README.md', 'r', encoding='utf-8') as f:
        return f.read()


setup(
    name='ott-did',
    version='1.0.0',
    description='OTT (Over-The-Tangle) DID method: create, resolve, update and revoke did:ott identifiers',
    long_description=read_readme(),
    long_description_content_type='text/markdown',
    py_modules=[
        'ott_errors',
        'ott_config',
        'ott_crypto',
        'ott_index',
        'ott_message',
        'ott_ledger',
        'ott_method',
        'ott_gateway',
        'did_provider',
        'ott_bench',
        'ott_cli',
        'ott_dashboard',
    ],
    install_requires=read_requirements(),
    extras_require={
        'test': ['pytest>=7.4.0', 'hypothesis>=6.80.0'],
    },
    python_requires='>=3.9,<4.0',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Developers',
        'Topic :: Security :: Cryptography',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
    ],
    entry_points={
        'console_scripts': [
            'ott=ott_cli:main',
        ],
    },
)

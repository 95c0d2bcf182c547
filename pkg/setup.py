import setuptools

setuptools.setup(
    name='srlcrawler',
    packages=setuptools.find_packages(exclude=['tests']),
    entry_points={
        'console_scripts': ['srlcrawler = srlcrawler.cli:main'],
        },
    )

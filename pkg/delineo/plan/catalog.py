import json

from delineo.core.errors import UnknownStructureError, CatalogError
from delineo.core.typing import *


def _load_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise CatalogError(f"cannot read {path}: {e}") from e


class StructureCatalog:
    """
    Names of the structures the segmentation provider can delineate
    """

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if not all(isinstance(n, str) and n for n in names):
            raise CatalogError(f"structure names must be non-empty strings, got {list(names)}")
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise CatalogError(f"structure names must be unique, {', '.join(duplicates)} repeat")
        self._names = names
        self._by_folded = {n.casefold(): n for n in names}

    @property
    def names(self) -> Tuple[str, ...]:
        return self._names

    def __contains__(self, name: str) -> bool:
        return name in self._names

    def __iter__(self):
        return iter(self._names)

    def __len__(self):
        return len(self._names)

    def lookup(self, name: str) -> Optional[str]:
        """
        Catalog spelling of `name`, matched case-insensitively
        """
        return self._by_folded.get(name.casefold())

    def __repr__(self):
        return f"<StructureCatalog {list(self._names)}>"

    @staticmethod
    def from_json(path: PathLike) -> 'StructureCatalog':
        names = _load_json(path)
        if not isinstance(names, list):
            raise CatalogError(f"{path}: a structure catalog is a JSON array of names")
        return StructureCatalog(names)


class AliasTable:
    """
    Guideline term (matched case-insensitively) to one or more catalog structure names.

    Example:
            aliases = AliasTable({"Lung": ["Lung_L", "Lung_R"]}, catalog)
            aliases["lung"]  # ['Lung_L', 'Lung_R']
    """

    def __init__(self, mapping: Mapping[str, Union[str, Sequence[str]]], catalog: Optional[StructureCatalog] = None):
        self._terms = {}
        self._targets = {}
        for term, targets in mapping.items():
            targets = [targets] if isinstance(targets, str) else list(targets)
            if not targets or not all(isinstance(t, str) for t in targets):
                raise CatalogError(f"alias '{term}' must map to one or more structure names")
            if catalog is not None:
                for target in targets:
                    if target not in catalog:
                        raise UnknownStructureError(target)
            self._terms[term.casefold()] = term
            self._targets[term.casefold()] = tuple(targets)

    def get(self, term: str) -> Optional[Tuple[str, ...]]:
        return self._targets.get(term.casefold())

    def __getitem__(self, term: str) -> List[str]:
        return list(self._targets[term.casefold()])

    def __contains__(self, term: str) -> bool:
        return term.casefold() in self._targets

    def __len__(self):
        return len(self._targets)

    def items(self) -> List[Tuple[str, Tuple[str, ...]]]:
        """
        (term as written, targets) sorted by term
        """
        return sorted(((self._terms[k], v) for k, v in self._targets.items()), key=lambda kv: kv[0].casefold())

    @staticmethod
    def from_json(path: PathLike, catalog: Optional[StructureCatalog] = None) -> 'AliasTable':
        mapping = _load_json(path)
        if not isinstance(mapping, dict):
            raise CatalogError(f"{path}: an alias table is a JSON object of term to structure names")
        return AliasTable(mapping, catalog)


def resolve_aliases(term: str, table: AliasTable, catalog: StructureCatalog) -> List[str]:
    """
    Structure names for a guideline term: the alias expansion if there is one, else the term itself when
    the catalog knows it.
    """
    targets = table.get(term)
    if targets is not None:
        return list(targets)
    name = catalog.lookup(term)
    if name is None:
        raise UnknownStructureError(term)
    return [name]


def expand_terms(terms: Iterable[str], table: AliasTable, catalog: StructureCatalog) -> List[str]:
    """
    Resolve several terms into one ordered, duplicate-free structure list
    """
    names = []
    for term in terms:
        for name in resolve_aliases(term, table, catalog):
            if name not in names:
                names.append(name)
    return names

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Generator, ReferenceGenerator};
use crate::catalog::EnvironmentCatalog;

pub type GeneratorFactory = Arc<dyn Fn(Arc<EnvironmentCatalog>) -> Arc<dyn Generator> + Send + Sync>;

/// Generator plug-ins by name.
#[derive(Clone, Default)]
pub struct GeneratorRegistry {
    factories: BTreeMap<String, GeneratorFactory>,
}

impl GeneratorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding the `reference` generator.
    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.register(
            "reference",
            Arc::new(|c| Arc::new(ReferenceGenerator::new(c)) as Arc<dyn Generator>),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, factory: GeneratorFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, catalog: Arc<EnvironmentCatalog>) -> Option<Arc<dyn Generator>> {
        self.factories.get(name).map(|f| f(catalog))
    }
}

impl std::fmt::Debug for GeneratorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

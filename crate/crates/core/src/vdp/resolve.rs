//! Replacing `url` nodes by the documents they point at.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::codec::parse_vdp;
use super::error::VdpError;
use super::model::{ResolutionLimits, VdpChild, VdpDocument, VdpNode};

/// Source of hyperlinked VDP documents.
pub trait VdpFetcher {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String>;
}

impl<F> VdpFetcher for F
where
    F: Fn(&str) -> Result<Vec<u8>, String>,
{
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String> {
        self(url)
    }
}

/// In-memory fetcher that also counts how often it was called.
#[derive(Debug, Default)]
pub struct MemoryFetcher {
    documents: HashMap<String, Vec<u8>>,
    calls: AtomicUsize,
}

impl MemoryFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.documents.insert(url.into(), body.into());
    }

    pub fn with(mut self, url: impl Into<String>, body: impl Into<Vec<u8>>) -> Self {
        self.insert(url, body);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl VdpFetcher for MemoryFetcher {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.documents
            .get(url)
            .cloned()
            .ok_or_else(|| "404 not found".to_string())
    }
}

/// Outcome of a resolve call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub document: VdpDocument,
    /// Distinct documents fetched (each URL counts once).
    pub documents_fetched: usize,
}

/// Resolve every `ExternalRef` in `doc`. The root document has no known URL,
/// so a self-reference is only detected once it is reached through a link;
/// use [`resolve_url`] or [`Resolver::with_origin`] when the origin is known.
pub fn resolve<F: VdpFetcher + ?Sized>(
    doc: &VdpDocument,
    fetcher: &F,
    limits: ResolutionLimits,
) -> Result<VdpDocument, VdpError> {
    Resolver::new(fetcher, limits)
        .resolve(doc)
        .map(|r| r.document)
}

/// Fetch the document at `url` and resolve it.
pub fn resolve_url<F: VdpFetcher + ?Sized>(
    url: &str,
    fetcher: &F,
    limits: ResolutionLimits,
) -> Result<Resolved, VdpError> {
    let mut resolver = Resolver::new(fetcher, limits);
    let doc = resolver.load(url)?.clone();
    resolver.origin = Some(url.to_string());
    resolver.resolve(&doc)
}

pub struct Resolver<'a, F: ?Sized> {
    fetcher: &'a F,
    limits: ResolutionLimits,
    origin: Option<String>,
    fetched: HashMap<String, VdpDocument>,
    // Fully resolved subtrees and the number of nested documents they span.
    finished: HashMap<String, (VdpNode, usize)>,
    stack: Vec<String>,
}

impl<'a, F: VdpFetcher + ?Sized> Resolver<'a, F> {
    pub fn new(fetcher: &'a F, limits: ResolutionLimits) -> Self {
        Self {
            fetcher,
            limits,
            origin: None,
            fetched: HashMap::new(),
            finished: HashMap::new(),
            stack: Vec::new(),
        }
    }

    /// Declare the URL the root document was loaded from.
    pub fn with_origin(mut self, url: impl Into<String>) -> Self {
        self.origin = Some(url.into());
        self
    }

    pub fn resolve(mut self, doc: &VdpDocument) -> Result<Resolved, VdpError> {
        if let Some(origin) = self.origin.clone() {
            self.stack.push(origin);
        }
        let (root, _) = self.resolve_node(&doc.root, 1)?;
        Ok(Resolved {
            document: VdpDocument {
                version: doc.version,
                description: doc.description.clone(),
                root,
            },
            documents_fetched: self.fetched.len(),
        })
    }

    fn load(&mut self, url: &str) -> Result<&VdpDocument, VdpError> {
        if !self.fetched.contains_key(url) {
            if self.fetched.len() >= self.limits.max_documents {
                return Err(VdpError::DocumentBudgetExceeded {
                    max: self.limits.max_documents,
                });
            }
            let bytes = self.fetcher.fetch(url).map_err(|reason| VdpError::Fetch {
                url: url.to_string(),
                reason,
            })?;
            let doc = parse_vdp(&bytes).map_err(|e| VdpError::Nested {
                url: url.to_string(),
                source: Box::new(e),
            })?;
            self.fetched.insert(url.to_string(), doc);
        }
        Ok(&self.fetched[url])
    }

    /// Returns the resolved node and how many documents deep it reaches.
    fn resolve_node(&mut self, node: &VdpNode, depth: usize) -> Result<(VdpNode, usize), VdpError> {
        match node {
            VdpNode::Payee(_) => Ok((node.clone(), 0)),
            VdpNode::Split(children) => {
                let mut out = Vec::with_capacity(children.len());
                let mut height = 0;
                for child in children {
                    let (resolved, h) = self.resolve_node(&child.node, depth)?;
                    height = height.max(h);
                    out.push(VdpChild {
                        id: child.id.clone(),
                        shares: child.shares,
                        node: resolved,
                    });
                }
                Ok((VdpNode::Split(out), height))
            }
            VdpNode::ExternalRef(url) => {
                if self.stack.iter().any(|u| u == url) {
                    return Err(VdpError::Cycle { url: url.clone() });
                }
                if depth + 1 > self.limits.max_depth {
                    return Err(VdpError::DepthExceeded {
                        max: self.limits.max_depth,
                    });
                }
                // A finished subtree cannot contain any URL on the current
                // path, otherwise its own resolution would have hit a cycle.
                if let Some((subtree, h)) = self.finished.get(url) {
                    if depth + h <= self.limits.max_depth {
                        return Ok((subtree.clone(), *h));
                    }
                }
                let root = self.load(url)?.root.clone();
                self.stack.push(url.clone());
                let result = self.resolve_node(&root, depth + 1);
                self.stack.pop();
                let (subtree, inner) = result?;
                let height = inner + 1;
                self.finished.insert(url.clone(), (subtree.clone(), height));
                Ok((subtree, height))
            }
        }
    }
}

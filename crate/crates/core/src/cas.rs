//! Content-addressed blob store.
//!
//! Blobs are immutable byte sequences keyed by the lowercase hex SHA-256 of
//! their bytes. Two stores agree on the address of any blob, so the address
//! doubles as a global identity: the same content can never be registered
//! under two names.
//!
//! [`DirStore`] persists blobs as `<root>/blobs/<first two hex chars>/<hex>`
//! with write-to-temp-then-rename semantics. [`MemStore`] keeps everything in
//! memory and is what the browser demo and most tests use.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 digest of a blob, 64 characters.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentAddress(String);

impl ContentAddress {
    /// Address of `bytes`.
    pub fn of(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    /// Parses a 64-character lowercase hex string.
    pub fn parse(s: &str) -> Result<Self, CasError> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(Self(s.to_owned()))
        } else {
            Err(CasError::InvalidAddress(s.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First eight hex characters, for human-facing reports.
    pub fn short(&self) -> &str {
        &self.0[..8]
    }

    /// True when `bytes` hash to this address.
    pub fn verifies(&self, bytes: &[u8]) -> bool {
        Self::of(bytes) == *self
    }
}

impl fmt::Display for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentAddress({})", self.0)
    }
}

impl FromStr for ContentAddress {
    type Err = CasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Stored blob contents.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Blob(Vec<u8>);

impl Blob {
    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CasError {
    #[error("NotFound: no blob stored under {0}")]
    NotFound(ContentAddress),
    #[error("InvalidAddress: {0:?} is not a 64-char lowercase hex digest")]
    InvalidAddress(String),
    #[error("Corrupted: blob under {0} no longer hashes to its address")]
    Corrupted(ContentAddress),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

/// Storage backend keyed by content address.
pub trait BlobStore: Send + Sync {
    /// Stores `bytes`, returning their address. Storing equal bytes twice is
    /// a no-op.
    fn put(&self, bytes: &[u8]) -> Result<ContentAddress, CasError>;

    /// Returns the stored bytes exactly as held, without re-hashing them.
    /// This is what an owner hands out over the wire; the receiver is
    /// responsible for checking integrity.
    fn read_raw(&self, addr: &ContentAddress) -> Result<Blob, CasError>;

    fn contains(&self, addr: &ContentAddress) -> bool;

    /// Number of distinct blobs held.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Overwrites the bytes held under `addr` without re-addressing them.
    /// Only fault-injection harnesses call this.
    fn overwrite_unchecked(&self, addr: &ContentAddress, bytes: &[u8]) -> Result<(), CasError>;

    /// Returns the blob under `addr`, verifying that it still hashes to `addr`.
    fn get(&self, addr: &ContentAddress) -> Result<Blob, CasError> {
        let blob = self.read_raw(addr)?;
        if addr.verifies(blob.bytes()) {
            Ok(blob)
        } else {
            Err(CasError::Corrupted(addr.clone()))
        }
    }
}

/// In-memory store.
#[derive(Debug, Default)]
pub struct MemStore {
    blobs: RwLock<BTreeMap<ContentAddress, Vec<u8>>>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemStore {
    fn put(&self, bytes: &[u8]) -> Result<ContentAddress, CasError> {
        let addr = ContentAddress::of(bytes);
        let mut blobs = self.blobs.write().expect("blob store lock poisoned");
        blobs.entry(addr.clone()).or_insert_with(|| bytes.to_vec());
        Ok(addr)
    }

    fn read_raw(&self, addr: &ContentAddress) -> Result<Blob, CasError> {
        let blobs = self.blobs.read().expect("blob store lock poisoned");
        blobs
            .get(addr)
            .map(|b| Blob(b.clone()))
            .ok_or_else(|| CasError::NotFound(addr.clone()))
    }

    fn contains(&self, addr: &ContentAddress) -> bool {
        self.blobs.read().expect("blob store lock poisoned").contains_key(addr)
    }

    fn len(&self) -> usize {
        self.blobs.read().expect("blob store lock poisoned").len()
    }

    fn overwrite_unchecked(&self, addr: &ContentAddress, bytes: &[u8]) -> Result<(), CasError> {
        let mut blobs = self.blobs.write().expect("blob store lock poisoned");
        match blobs.get_mut(addr) {
            Some(slot) => {
                *slot = bytes.to_vec();
                Ok(())
            }
            None => Err(CasError::NotFound(addr.clone())),
        }
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Store persisted under `<root>/blobs/`.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CasError> {
        let root = root.into();
        fs::create_dir_all(root.join("blobs"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// On-disk location of the blob for `addr`.
    pub fn blob_path(&self, addr: &ContentAddress) -> PathBuf {
        self.root
            .join("blobs")
            .join(&addr.as_str()[..2])
            .join(addr.as_str())
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), CasError> {
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl BlobStore for DirStore {
    fn put(&self, bytes: &[u8]) -> Result<ContentAddress, CasError> {
        let addr = ContentAddress::of(bytes);
        let path = self.blob_path(&addr);
        if !path.exists() {
            self.write_atomic(&path, bytes)?;
        }
        Ok(addr)
    }

    fn read_raw(&self, addr: &ContentAddress) -> Result<Blob, CasError> {
        match fs::read(self.blob_path(addr)) {
            Ok(bytes) => Ok(Blob(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(CasError::NotFound(addr.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn contains(&self, addr: &ContentAddress) -> bool {
        self.blob_path(addr).is_file()
    }

    fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(self.root.join("blobs")) else {
            return 0;
        };
        shards
            .flatten()
            .filter_map(|shard| fs::read_dir(shard.path()).ok())
            .flat_map(|entries| entries.flatten())
            .filter(|e| ContentAddress::parse(&e.file_name().to_string_lossy()).is_ok())
            .count()
    }

    fn overwrite_unchecked(&self, addr: &ContentAddress, bytes: &[u8]) -> Result<(), CasError> {
        let path = self.blob_path(addr);
        if !path.is_file() {
            return Err(CasError::NotFound(addr.clone()));
        }
        self.write_atomic(&path, bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_sha256_vectors() {
        assert_eq!(
            ContentAddress::of(b"hello").as_str(),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(
            ContentAddress::of(b"").as_str(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn put_is_idempotent() {
        let store = MemStore::new();
        let a = store.put(b"x").unwrap();
        let b = store.put(b"x").unwrap();
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn get_round_trip_and_missing() {
        let store = MemStore::new();
        let addr = store.put(b"abc").unwrap();
        assert_eq!(store.get(&addr).unwrap().bytes(), b"abc");
        let empty = store.put(b"").unwrap();
        assert!(store.get(&empty).unwrap().is_empty());
        let never = ContentAddress::of(b"never stored");
        assert!(matches!(store.get(&never), Err(CasError::NotFound(_))));
    }

    #[test]
    fn contains_only_stored() {
        let store = MemStore::new();
        let x = store.put(b"x").unwrap();
        assert!(store.contains(&x));
        assert!(!store.contains(&ContentAddress::of(b"y")));
    }

    #[test]
    fn parse_rejects_bad_addresses() {
        assert!(ContentAddress::parse("abc").is_err());
        assert!(ContentAddress::parse(&"A".repeat(64)).is_err());
        assert!(ContentAddress::parse(&"g".repeat(64)).is_err());
        assert!(ContentAddress::parse(&"a".repeat(64)).is_ok());
    }

    #[test]
    fn overwrite_is_detected_by_get() {
        let store = MemStore::new();
        let addr = store.put(b"payload").unwrap();
        store.overwrite_unchecked(&addr, b"paylaod").unwrap();
        assert_eq!(store.read_raw(&addr).unwrap().bytes(), b"paylaod");
        assert!(matches!(store.get(&addr), Err(CasError::Corrupted(_))));
    }

    #[test]
    fn dir_store_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirStore::open(dir.path()).unwrap();
        let addr = store.put(b"hello").unwrap();
        let expected = dir
            .path()
            .join("blobs/2c/2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        assert!(expected.is_file());
        assert_eq!(fs::read(&expected).unwrap(), b"hello");
        assert_eq!(store.get(&addr).unwrap().bytes(), b"hello");
        store.put(b"hello").unwrap();
        store.put(b"").unwrap();
        assert_eq!(store.len(), 2);
        assert!(matches!(
            store.get(&ContentAddress::of(b"nope")),
            Err(CasError::NotFound(_))
        ));

        // A second handle on the same root sees the same blobs.
        let reopened = DirStore::open(dir.path()).unwrap();
        assert!(reopened.contains(&addr));
    }

    #[test]
    fn concurrent_puts_converge() {
        let store = std::sync::Arc::new(MemStore::new());
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let store = store.clone();
                std::thread::spawn(move || store.put(format!("blob {}", i % 4).as_bytes()).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.len(), 4);
    }

    proptest! {
        #[test]
        fn round_trip_any_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let store = MemStore::new();
            let addr = store.put(&bytes).unwrap();
            prop_assert_eq!(store.get(&addr).unwrap().into_bytes(), bytes.clone());
            prop_assert_eq!(addr, ContentAddress::of(&bytes));
            prop_assert_eq!(store.len(), 1);
        }
    }
}

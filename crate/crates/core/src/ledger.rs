//! Deterministic simulated ledger.
//!
//! A single totally ordered log of transactions; no blocks, gas or
//! signatures. Each transaction is applied to a copy of the state and only
//! committed if the contract call succeeds, so a reverted transaction leaves
//! balances and contract state untouched and only adds its receipt.
//!
//! All tokens exist from genesis in a treasury account. Creating an account
//! is itself a transaction that moves the initial balance out of the
//! treasury, which keeps the total supply constant across every transaction.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::contracts::{self, CallContext, ContractError, Outcome, Payee, WorldState};

/// Contract name for ledger-level methods.
pub const LEDGER_CONTRACT: &str = "ledger";

/// First line of a persisted log.
pub const LOG_HEADER_PREFIX: &str = "# islnet-ledger v1 genesis_supply=";

pub const DEFAULT_GENESIS_SUPPLY: u64 = 1_000_000_000;

/// 40-char lowercase hex account address.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(String);

impl Address {
    /// Address of the genesis treasury.
    pub fn treasury() -> Self {
        Self("0".repeat(40))
    }

    /// SHA-256 of the big-endian creation counter, truncated to 20 bytes.
    pub fn from_counter(n: u64) -> Self {
        let digest = Sha256::digest(n.to_be_bytes());
        Self(hex::encode(&digest[..20]))
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 40 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
            .then(|| Self(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..8]
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("UnknownSender: {0}")]
    UnknownSender(Address),
    #[error("InsufficientFunds: {sender} has {balance}, needs {value}")]
    InsufficientFunds {
        sender: Address,
        balance: u64,
        value: u64,
    },
    #[error("CorruptLog: {0}")]
    CorruptLog(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

/// A contract call not yet sequenced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub sender: Address,
    pub contract: String,
    pub method: String,
    pub args: Vec<String>,
    pub value: u64,
}

impl Call {
    pub fn new(sender: &Address, contract: &str, method: &str, args: Vec<String>, value: u64) -> Self {
        Self {
            sender: sender.clone(),
            contract: contract.to_owned(),
            method: method.to_owned(),
            args,
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub seq: u64,
    pub sender: Address,
    pub contract: String,
    pub method: String,
    pub args: Vec<String>,
    pub value: u64,
}

fn escape_field(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.:/~@#+".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn unescape_field(s: &str) -> Result<String, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3).ok_or("truncated escape")?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape %{hex}"))?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|e| e.to_string())
}

impl Transaction {
    /// Canonical `key=value` line without the trailing newline.
    pub fn encode(&self) -> String {
        let args: Vec<String> = self.args.iter().map(|a| escape_field(a)).collect();
        format!(
            "seq={} sender={} contract={} method={} argc={} args={} value={}",
            self.seq,
            self.sender,
            escape_field(&self.contract),
            escape_field(&self.method),
            self.args.len(),
            args.join(","),
            self.value
        )
    }

    pub fn decode(line: &str) -> Result<Self, LedgerError> {
        let corrupt = |why: String| LedgerError::CorruptLog(format!("{why} in {line:?}"));
        let fields: Vec<(&str, &str)> = line
            .split(' ')
            .map(|kv| kv.split_once('=').ok_or_else(|| corrupt(format!("field {kv:?} lacks `=`"))))
            .collect::<Result<_, _>>()?;
        let keys: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        if keys != ["seq", "sender", "contract", "method", "argc", "args", "value"] {
            return Err(corrupt(format!("unexpected keys {keys:?}")));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| corrupt(format!("bad integer {s:?}")));
        let text = |s: &str| unescape_field(s).map_err(corrupt);
        let argc = num(fields[4].1)? as usize;
        let args: Vec<String> = if argc == 0 {
            if !fields[5].1.is_empty() {
                return Err(corrupt("args present with argc=0".into()));
            }
            Vec::new()
        } else {
            fields[5].1.split(',').map(text).collect::<Result<_, _>>()?
        };
        if args.len() != argc {
            return Err(corrupt(format!("argc={argc} but {} args", args.len())));
        }
        Ok(Self {
            seq: num(fields[0].1)?,
            sender: Address::parse(fields[1].1).ok_or_else(|| corrupt("bad sender".into()))?,
            contract: text(fields[2].1)?,
            method: text(fields[3].1)?,
            args,
            value: num(fields[6].1)?,
        })
    }

    pub fn tx_id(&self) -> String {
        tx_id(self.seq)
    }
}

pub fn tx_id(seq: u64) -> String {
    format!("tx-{seq}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Reverted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: String,
    pub seq: u64,
    pub status: Status,
    pub revert: Option<ContractError>,
    pub return_value: String,
}

impl Receipt {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn revert_reason(&self) -> Option<String> {
        self.revert.as_ref().map(ToString::to_string)
    }

    /// The receipt as a result, reverts becoming errors.
    pub fn into_result(self) -> Result<Receipt, ContractError> {
        match self.revert {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Everything transactions can change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    pub accounts: BTreeMap<Address, u64>,
    /// Tokens held by contracts rather than accounts.
    pub contract_balance: u64,
    pub accounts_created: u64,
    pub world: WorldState,
}

impl LedgerState {
    fn genesis(supply: u64) -> Self {
        Self {
            accounts: [(Address::treasury(), supply)].into(),
            contract_balance: 0,
            accounts_created: 0,
            world: WorldState::default(),
        }
    }

    /// Sum of all balances, contract-held included.
    pub fn total_supply(&self) -> u128 {
        self.accounts.values().map(|&b| b as u128).sum::<u128>() + self.contract_balance as u128
    }

    /// Canonical, stable-ordered text form.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (addr, bal) in &self.accounts {
            out.push_str(&format!("account {addr} {bal}\n"));
        }
        out.push_str(&format!("contract_balance {}\n", self.contract_balance));
        out.push_str(&format!("accounts_created {}\n", self.accounts_created));
        out.push_str(&self.world.dump());
        out
    }

    /// SHA-256 of [`Self::dump`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.dump().as_bytes()))
    }
}

pub struct Ledger {
    genesis_supply: u64,
    state: LedgerState,
    log: Vec<Transaction>,
    receipts: Vec<Receipt>,
    sink: Option<File>,
}

impl fmt::Debug for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ledger")
            .field("genesis_supply", &self.genesis_supply)
            .field("transactions", &self.log.len())
            .finish()
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(DEFAULT_GENESIS_SUPPLY)
    }
}

impl Ledger {
    pub fn new(genesis_supply: u64) -> Self {
        Self {
            genesis_supply,
            state: LedgerState::genesis(genesis_supply),
            log: Vec::new(),
            receipts: Vec::new(),
            sink: None,
        }
    }

    pub fn genesis_supply(&self) -> u64 {
        self.genesis_supply
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn world(&self) -> &WorldState {
        &self.state.world
    }

    pub fn log(&self) -> &[Transaction] {
        &self.log
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn balance(&self, addr: &Address) -> Option<u64> {
        self.state.accounts.get(addr).copied()
    }

    pub fn next_seq(&self) -> u64 {
        self.log.len() as u64 + 1
    }

    /// Starts appending every committed transaction to `path`, after writing
    /// the header and any transactions already in the log.
    pub fn attach_log_file(&mut self, path: &Path) -> Result<(), LedgerError> {
        let mut f = OpenOptions::new().create(true).truncate(true).write(true).open(path)?;
        f.write_all(self.encode_log().as_bytes())?;
        f.flush()?;
        self.sink = Some(OpenOptions::new().append(true).open(path)?);
        Ok(())
    }

    /// Header line plus one encoded transaction per line.
    pub fn encode_log(&self) -> String {
        let mut out = format!("{LOG_HEADER_PREFIX}{}\n", self.genesis_supply);
        for tx in &self.log {
            out.push_str(&tx.encode());
            out.push('\n');
        }
        out
    }

    /// Parses a persisted log into its genesis supply and transactions.
    pub fn decode_log(text: &str) -> Result<(u64, Vec<Transaction>), LedgerError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| LedgerError::CorruptLog("missing header".into()))?;
        let supply = header
            .strip_prefix(LOG_HEADER_PREFIX)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LedgerError::CorruptLog(format!("bad header {header:?}")))?;
        let txs = lines
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Transaction::decode)
            .collect::<Result<_, _>>()?;
        Ok((supply, txs))
    }

    /// Moves `initial_balance` from the treasury into a fresh account.
    pub fn create_account(&mut self, initial_balance: u64) -> Result<Address, LedgerError> {
        let receipt = self.submit(Call::new(
            &Address::treasury(),
            LEDGER_CONTRACT,
            "create_account",
            vec![],
            initial_balance,
        ))?;
        match receipt.revert {
            None => Ok(Address::parse(&receipt.return_value).expect("ledger returns an address")),
            Some(e) => unreachable!("treasury account creation cannot revert: {e}"),
        }
    }

    /// Sequences and applies a call.
    pub fn submit(&mut self, call: Call) -> Result<Receipt, LedgerError> {
        let tx = Transaction {
            seq: self.next_seq(),
            sender: call.sender,
            contract: call.contract,
            method: call.method,
            args: call.args,
            value: call.value,
        };
        self.apply(tx)
    }

    fn apply(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        if tx.seq != self.next_seq() {
            return Err(LedgerError::CorruptLog(format!(
                "expected seq {}, found {}",
                self.next_seq(),
                tx.seq
            )));
        }
        let balance = *self
            .state
            .accounts
            .get(&tx.sender)
            .ok_or_else(|| LedgerError::UnknownSender(tx.sender.clone()))?;
        if balance < tx.value {
            return Err(LedgerError::InsufficientFunds {
                sender: tx.sender.clone(),
                balance,
                value: tx.value,
            });
        }

        let mut next = self.state.clone();
        let ctx = CallContext {
            sender: tx.sender.clone(),
            value: tx.value,
            seq: tx.seq,
        };
        let outcome = if tx.contract == LEDGER_CONTRACT {
            ledger_method(&mut next, &ctx, &tx.method, &tx.args)
        } else {
            contracts::execute(&mut next.world, &ctx, &tx.contract, &tx.method, &tx.args)
        }
        .and_then(|outcome| {
            transfer(&mut next, &tx.sender, &outcome.payee, tx.value)?;
            Ok(outcome)
        });

        let receipt = match outcome {
            Ok(outcome) => {
                self.state = next;
                Receipt {
                    tx_id: tx.tx_id(),
                    seq: tx.seq,
                    status: Status::Ok,
                    revert: None,
                    return_value: outcome.return_value,
                }
            }
            Err(e) => Receipt {
                tx_id: tx.tx_id(),
                seq: tx.seq,
                status: Status::Reverted,
                revert: Some(e),
                return_value: String::new(),
            },
        };
        if let Some(sink) = &mut self.sink {
            writeln!(sink, "{}", tx.encode())?;
            sink.flush()?;
        }
        self.log.push(tx);
        self.receipts.push(receipt.clone());
        Ok(receipt)
    }

    /// Re-executes `log` from genesis.
    pub fn replay(genesis_supply: u64, log: &[Transaction]) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(genesis_supply);
        for tx in log {
            ledger.apply(tx.clone()).map_err(|e| match e {
                LedgerError::CorruptLog(m) => LedgerError::CorruptLog(m),
                other => LedgerError::CorruptLog(format!("seq {}: {other}", tx.seq)),
            })?;
        }
        Ok(ledger)
    }
}

fn ledger_method(
    state: &mut LedgerState,
    ctx: &CallContext,
    method: &str,
    args: &[String],
) -> Result<Outcome, ContractError> {
    match method {
        "create_account" => {
            if !args.is_empty() {
                return Err(ContractError::BadArguments("create_account takes no arguments".into()));
            }
            if ctx.sender != Address::treasury() {
                return Err(ContractError::Unauthorized(
                    "only the treasury creates accounts".into(),
                ));
            }
            state.accounts_created += 1;
            let addr = Address::from_counter(state.accounts_created);
            if state.accounts.insert(addr.clone(), 0).is_some() {
                return Err(ContractError::BadArguments(format!("address collision {addr}")));
            }
            Ok(Outcome {
                return_value: addr.to_string(),
                payee: Payee::Account(addr),
            })
        }
        other => Err(ContractError::UnknownMethod(format!("{LEDGER_CONTRACT}.{other}"))),
    }
}

fn transfer(state: &mut LedgerState, from: &Address, to: &Payee, value: u64) -> Result<(), ContractError> {
    if value == 0 {
        return Ok(());
    }
    match to {
        Payee::Account(addr) if !state.accounts.contains_key(addr) => {
            return Err(ContractError::UnknownResource(format!("payee account {addr}")));
        }
        Payee::None => return Err(ContractError::NonPayable),
        _ => {}
    }
    *state.accounts.get_mut(from).expect("sender checked") -= value;
    match to {
        Payee::Account(addr) => *state.accounts.get_mut(addr).expect("payee checked") += value,
        Payee::Contract => state.contract_balance += value,
        Payee::None => unreachable!(),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_accounts() {
        let mut l = Ledger::new(1_000);
        let a = l.create_account(100).unwrap();
        let b = l.create_account(0).unwrap();
        assert_ne!(a, b);
        assert_eq!(l.balance(&a), Some(100));
        assert_eq!(l.balance(&b), Some(0));
        assert_eq!(l.balance(&Address::treasury()), Some(900));
        assert_eq!(a, Address::from_counter(1));
        assert_eq!(l.state().total_supply(), 1_000);
    }

    #[test]
    fn treasury_exhaustion() {
        let mut l = Ledger::new(10);
        assert!(matches!(l.create_account(11), Err(LedgerError::InsufficientFunds { .. })));
        assert!(l.log().is_empty());
    }

    #[test]
    fn payment_moves_value() {
        let mut l = Ledger::new(1_000);
        let a = l.create_account(100).unwrap();
        // Accounts can only receive value through a payable contract method;
        // the ledger method rejects non-treasury senders atomically.
        let r = l
            .submit(Call::new(&a, LEDGER_CONTRACT, "create_account", vec![], 10))
            .unwrap();
        assert_eq!(r.status, Status::Reverted);
        assert!(matches!(r.revert, Some(ContractError::Unauthorized(_))));
        assert_eq!(l.balance(&a), Some(100));
        assert_eq!(l.log().len(), 2);
    }

    #[test]
    fn submit_prechecks() {
        let mut l = Ledger::new(1_000);
        let a = l.create_account(5).unwrap();
        let err = l.submit(Call::new(&a, "oracle", "init", vec![], 10)).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientFunds { balance: 5, value: 10, .. }));
        let ghost = Address::from_counter(99);
        assert!(matches!(
            l.submit(Call::new(&ghost, "oracle", "init", vec![], 0)),
            Err(LedgerError::UnknownSender(_))
        ));
        assert_eq!(l.log().len(), 1);
    }

    #[test]
    fn transaction_encoding_round_trip() {
        let tx = Transaction {
            seq: 7,
            sender: Address::from_counter(1),
            contract: "oracle".into(),
            method: "share_model".into(),
            args: vec!["isl://a/model/m 1".into(), "".into(), "x,y=z%".into()],
            value: 3,
        };
        let line = tx.encode();
        assert!(!line.contains('\n'));
        assert_eq!(Transaction::decode(&line).unwrap(), tx);
        let empty = Transaction { args: vec![], ..tx.clone() };
        assert_eq!(Transaction::decode(&empty.encode()).unwrap(), empty);
        assert!(Transaction::decode("seq=1").is_err());
        assert!(Transaction::decode(&line.replace("argc=3", "argc=2")).is_err());
    }

    #[test]
    fn replay_reproduces_state() {
        let mut l = Ledger::new(1_000);
        let owner = l.create_account(10).unwrap();
        l.submit(Call::new(&owner, "oracle", "init", vec![], 0)).unwrap();
        let node = l.create_account(50).unwrap();
        l.submit(Call::new(&owner, "oracle", "register_node", vec![node.to_string()], 0))
            .unwrap();
        let replayed = Ledger::replay(1_000, l.log()).unwrap();
        assert_eq!(replayed.state(), l.state());
        assert_eq!(replayed.receipts(), l.receipts());

        let genesis = Ledger::replay(1_000, &[]).unwrap();
        assert_eq!(genesis.state(), Ledger::new(1_000).state());

        let mut gap = l.log().to_vec();
        gap.remove(1);
        assert!(matches!(Ledger::replay(1_000, &gap), Err(LedgerError::CorruptLog(_))));
    }

    #[test]
    fn log_text_round_trip() {
        let mut l = Ledger::new(500);
        l.create_account(1).unwrap();
        let (supply, txs) = Ledger::decode_log(&l.encode_log()).unwrap();
        assert_eq!(supply, 500);
        assert_eq!(txs, l.log());
        assert!(Ledger::decode_log("").is_err());
        assert!(Ledger::decode_log("# other\n").is_err());
    }

    #[test]
    fn attached_log_file_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.log");
        let mut l = Ledger::new(500);
        l.create_account(1).unwrap();
        l.attach_log_file(&path).unwrap();
        l.create_account(2).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), l.encode_log());
    }
}

//! Participant identities, role gates and the regulator's read-only
//! telemarketer credential table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::contract::{ExecEnv, Rejection};
use crate::crypto::{self, KeyPair, PublicKey, Signature};
use crate::ledger::rwset::TxContext;
use crate::ledger::state::StateRead;
use crate::ledger::tx::{TransactionPayload, TxType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Telemarketer,
    Scrubber,
    Observer,
    ThirdParty,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Operator => "operator",
            Role::Telemarketer => "telemarketer",
            Role::Scrubber => "scrubber",
            Role::Observer => "observer",
            Role::ThirdParty => "third_party",
        })
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "operator" => Role::Operator,
            "telemarketer" => Role::Telemarketer,
            "scrubber" => Role::Scrubber,
            "observer" => Role::Observer,
            "third_party" => Role::ThirdParty,
            other => return Err(format!("unknown role {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantIdentity {
    pub id: String,
    pub role: Role,
    pub public_key: PublicKey,
    /// Circle tag for operators; also the display prefix used at delivery.
    pub region: Option<String>,
    pub admitted_tick: u64,
    pub revoked: bool,
}

pub fn member_key(id: &str) -> Vec<u8> {
    format!("mem/{id}").into_bytes()
}

pub fn member_pk_key(pk: &PublicKey) -> Vec<u8> {
    format!("mempk/{}", pk.to_hex()).into_bytes()
}

/// Which kinds each role may propose.
pub fn may_propose(role: Role, tx_type: TxType) -> bool {
    use TxType::*;
    match role {
        Role::Observer => matches!(tx_type, ComplaintFiled | DegradedService),
        Role::Operator => matches!(
            tx_type,
            RegisterTelemarketer
                | UpdatePreference
                | GrantConsent
                | RevokeConsent
                | CampaignStatus
                | ComplaintFiled
        ),
        Role::Telemarketer => matches!(
            tx_type,
            RegisterTelemarketer
                | RegisterPrincipalEntity
                | RegisterHeader
                | DelegateHeader
                | RegisterTemplate
                | RegisterConsentTemplate
                | RequestConsent
                | CampaignInit
        ),
        Role::Scrubber => matches!(tx_type, ScrubResult),
        Role::ThirdParty => matches!(
            tx_type,
            RegisterTelemarketer
                | UpdatePreference
                | GrantConsent
                | RevokeConsent
                | ComplaintFiled
                | ScrubResult
        ),
    }
}

/// Active (non-revoked) participants.
#[derive(Clone, Debug, Default)]
pub struct Roster {
    members: BTreeMap<String, ParticipantIdentity>,
}

impl Roster {
    pub fn from_members(members: impl IntoIterator<Item = ParticipantIdentity>) -> Self {
        Roster {
            members: members
                .into_iter()
                .filter(|m| !m.revoked)
                .map(|m| (m.id.clone(), m))
                .collect(),
        }
    }

    pub fn from_state(state: &dyn StateRead) -> Self {
        Self::from_members(
            state
                .scan_prefix(b"mem/")
                .into_iter()
                .filter_map(|(_, v, _)| codec::decode::<ParticipantIdentity>(v).ok()),
        )
    }

    pub fn get(&self, id: &str) -> Option<&ParticipantIdentity> {
        self.members.get(id)
    }

    pub fn role_of(&self, id: &str) -> Option<Role> {
        self.get(id).map(|m| m.role)
    }

    pub fn ids_with_role(&self, role: Role) -> impl Iterator<Item = &String> {
        self.members
            .values()
            .filter(move |m| m.role == role)
            .map(|m| &m.id)
    }

    pub fn members(&self) -> impl Iterator<Item = &ParticipantIdentity> {
        self.members.values()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MembershipError {
    #[error("regulator database unavailable")]
    RegulatorDbUnavailable,
    #[error("regulator fixture: {0}")]
    Fixture(String),
}

/// The regulator's read-only (tm_id, payment receipt) table.
#[derive(Clone, Debug, Default)]
pub struct RegulatorDb {
    entries: BTreeSet<(String, String)>,
    pub outage: bool,
}

#[derive(Deserialize)]
struct FixtureRow {
    tm_id: String,
    receipt: String,
}

impl RegulatorDb {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        RegulatorDb {
            entries: pairs
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
            outage: false,
        }
    }

    /// CSV with a `tm_id,receipt` header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MembershipError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = BTreeSet::new();
        for row in rdr.deserialize::<FixtureRow>() {
            let row = row.map_err(|e| MembershipError::Fixture(e.to_string()))?;
            entries.insert((row.tm_id, row.receipt));
        }
        Ok(RegulatorDb {
            entries,
            outage: false,
        })
    }

    pub fn insert(&mut self, tm_id: &str, receipt: &str) {
        self.entries
            .insert((tm_id.to_string(), receipt.to_string()));
    }

    pub fn verify(&self, tm_id: &str, receipt: &str) -> Result<bool, MembershipError> {
        if self.outage {
            return Err(MembershipError::RegulatorDbUnavailable);
        }
        Ok(self
            .entries
            .contains(&(tm_id.to_string(), receipt.to_string())))
    }
}

/// Self-registration of a telemarketer or third party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemarketerRegistration {
    pub tm_id: String,
    pub payment_receipt: String,
    pub role: Role,
    pub public_key: PublicKey,
    pub self_signature: Signature,
}

impl TelemarketerRegistration {
    fn message(tm_id: &str, receipt: &str, role: Role, pk: &PublicKey) -> Vec<u8> {
        let mut m = b"ucc-self-signed".to_vec();
        m.extend(codec::encode(&(tm_id, receipt, role, pk)));
        m
    }

    pub fn new(tm_id: &str, receipt: &str, role: Role, key: &KeyPair) -> Self {
        let public_key = key.public();
        TelemarketerRegistration {
            tm_id: tm_id.to_string(),
            payment_receipt: receipt.to_string(),
            role,
            public_key,
            self_signature: key.sign(&Self::message(tm_id, receipt, role, &public_key)),
        }
    }

    pub fn self_signature_valid(&self) -> bool {
        crypto::verify(
            &self.public_key,
            &Self::message(
                &self.tm_id,
                &self.payment_receipt,
                self.role,
                &self.public_key,
            ),
            &self.self_signature,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmitArgs {
    Register(TelemarketerRegistration),
    /// Key tombstone, proposed by an operator.
    Revoke {
        id: String,
    },
}

pub(crate) fn load_member(ctx: &mut TxContext<'_>, id: &str) -> Option<ParticipantIdentity> {
    ctx.get_as::<ParticipantIdentity>(&member_key(id))
        .filter(|m| !m.revoked)
}

pub(crate) fn execute_admit(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    match payload
        .decode_args::<AdmitArgs>()
        .map_err(|_| Rejection::BadArgs)?
    {
        AdmitArgs::Register(reg) => {
            if reg.tm_id != payload.proposer
                || !matches!(reg.role, Role::Telemarketer | Role::ThirdParty)
            {
                return Err(Rejection::VerificationFailed);
            }
            if !reg.self_signature_valid() {
                return Err(Rejection::VerificationFailed);
            }
            if ctx.exists(&member_key(&reg.tm_id)) || ctx.exists(&member_pk_key(&reg.public_key)) {
                return Err(Rejection::DuplicateIdentity);
            }
            let db = env.regulator.ok_or(Rejection::RegulatorDbUnavailable)?;
            match db.verify(&reg.tm_id, &reg.payment_receipt) {
                Ok(true) => {}
                Ok(false) => return Err(Rejection::VerificationFailed),
                Err(_) => return Err(Rejection::RegulatorDbUnavailable),
            }
            let identity = ParticipantIdentity {
                id: reg.tm_id.clone(),
                role: reg.role,
                public_key: reg.public_key,
                region: None,
                admitted_tick: payload.timestamp,
                revoked: false,
            };
            ctx.put_as(&member_key(&reg.tm_id), &identity);
            ctx.put_as(&member_pk_key(&reg.public_key), &reg.tm_id);
            Ok(())
        }
        AdmitArgs::Revoke { id } => {
            let proposer = load_member(ctx, &payload.proposer).ok_or(Rejection::UnknownIdentity)?;
            if proposer.role != Role::Operator {
                return Err(Rejection::NotPermitted);
            }
            let mut target = load_member(ctx, &id).ok_or(Rejection::UnknownIdentity)?;
            if !matches!(target.role, Role::Telemarketer | Role::ThirdParty) {
                return Err(Rejection::NotPermitted);
            }
            target.revoked = true;
            ctx.put_as(&member_key(&id), &target);
            Ok(())
        }
    }
}

/// Bootstrap identity as listed in a genesis file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisParticipant {
    pub id: String,
    pub role: Role,
    pub public_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

impl GenesisParticipant {
    pub fn to_identity(&self) -> Result<ParticipantIdentity, crypto::CryptoError> {
        Ok(ParticipantIdentity {
            id: self.id.clone(),
            role: self.role,
            public_key: PublicKey::from_hex(&self.public_key)?,
            region: self.region.clone(),
            admitted_tick: 0,
            revoked: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regulator_fixture_lookup() {
        let csv = "tm_id,receipt\nTM-001,RCPT-9\nTM-002,RCPT-4\n";
        let mut db = RegulatorDb::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(db.verify("TM-001", "RCPT-9"), Ok(true));
        assert_eq!(db.verify("TM-001", "RCPT-4"), Ok(false));
        db.outage = true;
        assert_eq!(
            db.verify("TM-001", "RCPT-9"),
            Err(MembershipError::RegulatorDbUnavailable)
        );
    }

    #[test]
    fn self_signed_registration() {
        let kp = KeyPair::derive(b"TM-001");
        let reg = TelemarketerRegistration::new("TM-001", "RCPT-9", Role::Telemarketer, &kp);
        assert!(reg.self_signature_valid());
        let mut forged = reg.clone();
        forged.payment_receipt = "RCPT-10".into();
        assert!(!forged.self_signature_valid());
    }

    #[test]
    fn observer_cannot_propose_registry_mutations() {
        for t in TxType::ALL.into_iter().filter(|t| *t != TxType::Genesis) {
            assert_eq!(may_propose(Role::Observer, t), !t.is_registry_mutation());
        }
        assert!(!may_propose(Role::Scrubber, TxType::UpdatePreference));
        assert!(may_propose(Role::Operator, TxType::UpdatePreference));
    }

    #[test]
    fn role_names_round_trip() {
        for r in [
            Role::Operator,
            Role::Telemarketer,
            Role::Scrubber,
            Role::Observer,
            Role::ThirdParty,
        ] {
            assert_eq!(r.to_string().parse::<Role>(), Ok(r));
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
    }
}

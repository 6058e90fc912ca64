//! Campaign lifecycle after scrubbing and the complaint pipeline.

pub mod audit;
pub mod complaint;
pub mod lifecycle;
pub mod rate;
pub mod watchlist;

pub use audit::{replay_audit, AuditError, AuditReport, TraceRow};
pub use complaint::{
    file_complaint, parse_sender, ComplaintClass, ComplaintFiledArgs, ComplaintRecord, SenderRef,
    Verdict,
};
pub use lifecycle::{
    campaign_id, campaign_status, execute_campaign, CampaignInitArgs, CampaignRecord,
    CampaignStatus, CampaignStatusArgs, Delivery, DeliveryReport, ExecuteError, LegOutcome,
};
pub use rate::RateDetector;
pub use watchlist::{
    action_for, update_watchlist, DegradedServiceArgs, WatchAction, WatchListEntry,
};

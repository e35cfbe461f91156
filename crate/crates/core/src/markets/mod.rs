//! Environments that drive the learner: the single-shot two-unit game
//! against an equilibrium seller and the periodic day-ahead auction (PDA).

pub mod bidder;
pub mod pda;
pub mod singleshot;

pub use bidder::{
    pda_features, register_ddpg, to_replay, train_pda, DdpgBidder, Exploration, PdaMarket, PdaTraining,
    PdaTrainingRun, PDA_ACTION_DIM, PDA_STATE_DIM,
};
pub use pda::{
    run_pda_game, AuctionRecord, PdaGame, PdaGameConfig, PdaGameResult, PdaTransition, SellerGroup, SellerMetrics,
    TraderMetrics, PROXIMITIES, SELLER_ID_BASE,
};
pub use singleshot::{
    action_to_alphas, evaluate_policy, singleshot_step, train_singleshot, EpisodeRecord, PolicyEvaluation, Schedule,
    SingleShotCase, SingleShotRun, SingleShotState, SingleShotTraining, StepOutcome, UpdateRecord,
};

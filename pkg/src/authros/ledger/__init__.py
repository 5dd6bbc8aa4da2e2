"""Simulated permissioned ledger hosting the access-control contract."""
from .chain import (
    Block,
    Chain,
    ConsensusConfig,
    ConsensusMode,
    InvalidBlock,
    TxReceipt,
    WorldState,
    execute_block,
    make_genesis,
    meets_difficulty,
    produce_block_poa,
    produce_block_pow,
    select_chain,
    verify_block,
)
from .contract import (
    AccessDenied,
    ContractRevert,
    ContractState,
    UnknownTarget,
    apply_call,
    contract_authority_grant,
    contract_data_query,
    contract_data_upload,
    contract_register,
)
from .genesis import GenesisConfig, GenesisError, load_genesis, node_keypair
from .network import Network, PendingReceipt, ReceiptStatus
from .tx import (
    AuthorityGrant,
    DataQuery,
    DataUpload,
    Register,
    Transaction,
    derive_address,
    sign_transaction,
)

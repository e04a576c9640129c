import json
import os
import random
import stat
import sys

import pytest
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec

from ott_crypto import keypair_from_seed, public_key_pem
from ott_errors import (
    AlreadyRevoked,
    DocumentTooLarge,
    InvalidKeyType,
    KeyringExists,
    LedgerUnavailable,
    ParseError,
    PartialUpdateError,
)
from ott_index import derive_index_material, generate_index_material, parse_did
from ott_ledger import LedgerRecord, SimulatedTangle
from ott_message import MAX_DATA_LENGTH, REVOKE_LENGTH, encode_create, encode_revoke
from ott_method import (
    DEFAULT_KEY_TYPE,
    DidKeyRing,
    ResolutionStatus,
    auth_key_to_pem,
    build_document,
    create,
    load_keyring,
    parse_document,
    resolve,
    resolve_records,
    revoke,
    save_keyring,
    serialize_document,
    update,
)


def _document_bytes(material, pem, created="2024-01-02T03:04:05Z"):
    return serialize_document(build_document(material.did, pem, DEFAULT_KEY_TYPE, created=created))


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

def test_serialization_is_canonical(zero_one_material, auth_key):
    doc = build_document(zero_one_material.did, public_key_pem(auth_key), DEFAULT_KEY_TYPE,
                         created="2023-09-01T12:00:00Z")
    first = serialize_document(doc)

    assert first == serialize_document(doc)
    assert b" " not in first.replace(b"BEGIN PUBLIC KEY", b"").replace(b"END PUBLIC KEY", b"")
    assert list(json.loads(first)) == ["@context", "id", "created", "authenticationMethod"]
    assert list(json.loads(first)["authenticationMethod"]) == ["id", "type", "controller", "publicKeyPem"]


def test_document_round_trip(zero_one_material, auth_key):
    doc = build_document(zero_one_material.did, public_key_pem(auth_key), DEFAULT_KEY_TYPE)
    assert parse_document(serialize_document(doc)) == doc
    assert doc.authentication_method.id == doc.id + "#keys-0"
    assert doc.authentication_method.controller == doc.id


@pytest.mark.parametrize("mutate, field_path", [
    (lambda d: d.pop("authenticationMethod"), "authenticationMethod"),
    (lambda d: d.pop("id"), "id"),
    (lambda d: d.update(created="yesterday"), "created"),
    (lambda d: d.update(created=5), "created"),
    (lambda d: d["authenticationMethod"].pop("publicKeyPem"), "authenticationMethod.publicKeyPem"),
    (lambda d: d["authenticationMethod"].update(publicKeyPem="not a pem"), "authenticationMethod.publicKeyPem"),
    (lambda d: d["authenticationMethod"].update(type=None), "authenticationMethod.type"),
    (lambda d: d.update({"@context": []}), "@context"),
    (lambda d: d["authenticationMethod"].update(id=d["id"] + "#keys-1"), "authenticationMethod.id"),
])
def test_parse_errors_name_the_field(zero_one_material, auth_key, mutate, field_path):
    obj = json.loads(_document_bytes(zero_one_material, public_key_pem(auth_key)))
    mutate(obj)
    with pytest.raises(ParseError) as excinfo:
        parse_document(json.dumps(obj).encode())
    assert excinfo.value.field_path == field_path


@pytest.mark.parametrize("data", [b"", b"not json", b"[1, 2]", b"\xff\xfe"])
def test_parse_rejects_non_documents(data):
    with pytest.raises(ParseError):
        parse_document(data)


def test_auth_key_to_pem_variants(auth_key):
    raw_pem = auth_key_to_pem(auth_key, "Ed25519VerificationKey2020")
    assert raw_pem == public_key_pem(auth_key)
    assert auth_key_to_pem(raw_pem.encode(), "Ed25519VerificationKey2020") == raw_pem

    ec_key = ec.generate_private_key(ec.SECP256K1()).public_key()
    der = ec_key.public_bytes(serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo)
    armored = auth_key_to_pem(der, "EcdsaSecp256k1VerificationKey2019")
    reloaded = serialization.load_pem_public_key(armored.encode())
    assert reloaded.public_bytes(serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo) == der

    with pytest.raises(ValueError):
        auth_key_to_pem(b"", DEFAULT_KEY_TYPE)


# ---------------------------------------------------------------------------
# Lifecycle
# ---------------------------------------------------------------------------

def test_create_then_resolve_valid(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    result = resolve(keyring.did, ledger)

    assert result.status is ResolutionStatus.VALID
    assert result.document.id == keyring.did.uri
    pem = result.document.authentication_method.public_key_pem
    loaded = serialization.load_pem_public_key(pem.encode())
    assert loaded.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw) == auth_key
    assert result.evidence.messages_scanned == 1
    assert result.evidence.revoke_record_id is None


def test_resolve_accepts_uri_strings(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    assert resolve(keyring.did.uri, ledger).status is ResolutionStatus.VALID


def test_two_creates_give_distinct_dids(ledger, auth_key):
    assert create(auth_key, DEFAULT_KEY_TYPE, ledger).did != create(auth_key, DEFAULT_KEY_TYPE, ledger).did


def test_unknown_key_type(ledger, auth_key):
    with pytest.raises(InvalidKeyType):
        create(auth_key, "Ed448VerificationKey", ledger)
    assert len(ledger.records) == 0


def test_document_too_large(ledger):
    blob = b"\x30" * 24000
    with pytest.raises(DocumentTooLarge):
        create(blob, "RsaVerificationKey2018", ledger)
    assert len(ledger.records) == 0


def test_document_size_boundary(ledger):
    material = generate_index_material()
    base = len(_document_bytes(material, auth_key_to_pem(b"\x01" * 3, "RsaVerificationKey2018")))
    # 3 raw bytes -> 4 base64 chars; grow the key until the document just fits
    key_len = 3 * ((MAX_DATA_LENGTH - base) // 4) + 3
    while len(_document_bytes(material, auth_key_to_pem(b"\x01" * key_len, "RsaVerificationKey2018"))) > MAX_DATA_LENGTH:
        key_len -= 3
    keyring = create(b"\x01" * key_len, "RsaVerificationKey2018", ledger, material=material)
    assert resolve(keyring.did, ledger).status is ResolutionStatus.VALID

    with pytest.raises(DocumentTooLarge):
        create(b"\x01" * (key_len + 48), "RsaVerificationKey2018", ledger)


def test_revoke_then_resolve(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    assert revoke(keyring, ledger)
    result = resolve(keyring.did, ledger)

    assert result.status is ResolutionStatus.REVOKED
    assert result.document is None
    assert result.to_dict()["document"] == {}
    assert result.evidence.revoke_record_id is not None


def test_double_revoke_is_idempotent(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    revoke(keyring, ledger)
    first = resolve(keyring.did, ledger)
    revoke(keyring, ledger)
    second = resolve(keyring.did, ledger)

    assert second.status is ResolutionStatus.REVOKED
    assert second.evidence.revoke_record_id == first.evidence.revoke_record_id
    assert len(ledger.fetch_by_index(keyring.did.index)) == 3


def test_revoke_precheck(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    revoke(keyring, ledger, precheck=True)
    with pytest.raises(AlreadyRevoked):
        revoke(keyring, ledger, precheck=True)


def test_foreign_revoke_leaves_victim_valid(ledger, auth_key):
    victim = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    attacker = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    ledger.attach(victim.did.index, encode_revoke(attacker.material))

    assert resolve(victim.did, ledger).status is ResolutionStatus.VALID


def test_garbage_before_create_is_skipped(ledger, auth_key):
    material = generate_index_material()
    ledger.attach(material.index, b"\x00garbage" * 10)
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger, material=material)

    result = resolve(keyring.did, ledger)
    assert result.status is ResolutionStatus.VALID
    assert result.evidence.messages_scanned == 2


def test_unknown_did_not_found(ledger):
    did = generate_index_material().did
    assert resolve(did, ledger).status is ResolutionStatus.NOT_FOUND


def test_only_garbage_is_not_found(ledger):
    did = generate_index_material().did
    ledger.attach(did.index, b"spam")
    assert resolve(did, ledger).status is ResolutionStatus.NOT_FOUND


def test_ott_shaped_but_invalid(ledger, auth_key):
    victim = generate_index_material()
    forger = generate_index_material()
    ledger.attach(victim.index, encode_create(_document_bytes(victim, public_key_pem(auth_key)), forger))

    assert resolve(victim.did, ledger).status is ResolutionStatus.INVALID


def test_unparseable_governing_document_is_invalid(ledger):
    material = generate_index_material()
    ledger.attach(material.index, encode_create(b"{not json", material))
    result = resolve(material.did, ledger)

    assert result.status is ResolutionStatus.INVALID
    assert result.evidence.create_record_id is not None


def test_document_for_another_did_is_invalid(ledger, auth_key):
    material = generate_index_material()
    other = generate_index_material()
    ledger.attach(material.index, encode_create(_document_bytes(other, public_key_pem(auth_key)), material))
    assert resolve(material.did, ledger).status is ResolutionStatus.INVALID


def test_foreign_controller_is_invalid(ledger, auth_key):
    material = generate_index_material()
    doc = json.loads(_document_bytes(material, public_key_pem(auth_key)))
    doc["authenticationMethod"]["controller"] = generate_index_material().did.uri
    ledger.attach(material.index, encode_create(json.dumps(doc).encode(), material))
    assert resolve(material.did, ledger).status is ResolutionStatus.INVALID


def test_foreign_method_id_is_invalid(ledger, auth_key):
    material = generate_index_material()
    doc = json.loads(_document_bytes(material, public_key_pem(auth_key)))
    doc["authenticationMethod"]["id"] = material.did.uri + "#other"
    ledger.attach(material.index, encode_create(json.dumps(doc).encode(), material))
    assert resolve(material.did, ledger).status is ResolutionStatus.INVALID


def test_first_valid_create_governs(ledger, auth_key):
    material = generate_index_material()
    first = _document_bytes(material, public_key_pem(auth_key), created="2024-01-01T00:00:00Z")
    second = _document_bytes(material, public_key_pem(auth_key), created="2025-01-01T00:00:00Z")
    ledger.attach(material.index, encode_create(first, material))
    ledger.attach(material.index, encode_create(second, material))

    assert resolve(material.did, ledger).document.created == "2024-01-01T00:00:00Z"


def test_revoke_before_create_still_revokes(ledger, auth_key):
    material = generate_index_material()
    ledger.attach(material.index, encode_revoke(material))
    ledger.attach(material.index, encode_create(_document_bytes(material, public_key_pem(auth_key)), material))
    assert resolve(material.did, ledger).status is ResolutionStatus.REVOKED


def test_resolution_is_a_pure_function_of_records(ledger, auth_key):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    ledger.attach(keyring.did.index, b"noise")
    records = ledger.fetch_by_index(keyring.did.index)

    replayed = [LedgerRecord(r.message_id, r.index, r.payload, r.attached_at + 1000, r.sequence) for r in records]
    assert resolve_records(keyring.did, records) == resolve_records(keyring.did, records)
    assert resolve_records(keyring.did, replayed) == resolve_records(keyring.did, records)


def test_update(ledger, auth_key):
    old = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    new = update(old, auth_key, DEFAULT_KEY_TYPE, ledger)

    assert new.did != old.did
    assert resolve(old.did, ledger).status is ResolutionStatus.REVOKED
    new_result = resolve(new.did, ledger)
    assert new_result.status is ResolutionStatus.VALID
    assert new_result.document.authentication_method.public_key_pem == public_key_pem(auth_key)


def test_update_matches_manual_revoke_then_create(auth_key):
    seeds = [bytes([n]) * 32 for n in range(2, 6)]
    old_material = derive_index_material(seeds[0], seeds[1])
    new_material = derive_index_material(seeds[2], seeds[3])

    composed, manual = SimulatedTangle(), SimulatedTangle()
    old_a = create(auth_key, DEFAULT_KEY_TYPE, composed, material=old_material)
    update(old_a, auth_key, DEFAULT_KEY_TYPE, composed, material=new_material)

    old_b = create(auth_key, DEFAULT_KEY_TYPE, manual, material=old_material)
    revoke(old_b, manual)
    create(auth_key, DEFAULT_KEY_TYPE, manual, material=new_material)

    for did in (old_material.did, new_material.did):
        assert resolve(did, composed).status == resolve(did, manual).status


def test_update_partial_failure(ledger, auth_key):
    old = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    ledger.inject_fault(attach_after=1)

    with pytest.raises(PartialUpdateError) as excinfo:
        update(old, auth_key, DEFAULT_KEY_TYPE, ledger)
    assert excinfo.value.revoked_did == old.did.uri
    assert isinstance(excinfo.value.cause, LedgerUnavailable)

    ledger.inject_fault()
    assert resolve(old.did, ledger).status is ResolutionStatus.REVOKED


class _BrokenAfterRevoke(SimulatedTangle):
    """Raises a non-ledger error on the attach that follows a revoke"""

    def __init__(self):
        super().__init__()
        self.revoked = False

    def attach(self, index, payload):
        if self.revoked:
            raise OSError("disk full")
        message_id = super().attach(index, payload)
        self.revoked = len(payload) == REVOKE_LENGTH
        return message_id


def test_update_wraps_any_failure_after_revoke(auth_key):
    ledger = _BrokenAfterRevoke()
    old = create(auth_key, DEFAULT_KEY_TYPE, ledger)

    with pytest.raises(PartialUpdateError) as excinfo:
        update(old, auth_key, DEFAULT_KEY_TYPE, ledger)
    assert isinstance(excinfo.value.cause, OSError)
    assert resolve(old.did, ledger).status is ResolutionStatus.REVOKED


@pytest.mark.parametrize("new_key, key_type, error", [
    (b"", DEFAULT_KEY_TYPE, ValueError),
    (b"\x01" * 32, "NoSuchKey2099", InvalidKeyType),
    (b"\x02" * 40000, "JsonWebKey2020", DocumentTooLarge),
])
def test_update_rejects_bad_input_before_revoking(ledger, auth_key, new_key, key_type, error):
    old = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    with pytest.raises(error):
        update(old, new_key, key_type, ledger)

    assert resolve(old.did, ledger).status is ResolutionStatus.VALID
    assert len(ledger.fetch_by_index(old.did.index)) == 1


def test_update_failing_revoke_propagates(ledger, auth_key):
    old = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    ledger.inject_fault(attach_after=0)
    with pytest.raises(LedgerUnavailable):
        update(old, auth_key, DEFAULT_KEY_TYPE, ledger)
    ledger.inject_fault()
    assert resolve(old.did, ledger).status is ResolutionStatus.VALID


# ---------------------------------------------------------------------------
# Keyring files
# ---------------------------------------------------------------------------

def test_keyring_round_trip(ledger, auth_key, keyring_path):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    save_keyring(keyring, keyring_path)
    loaded = load_keyring(keyring_path)

    assert loaded.did == keyring.did
    assert loaded.material == keyring.material
    assert loaded.auth_public_key_pem == keyring.auth_public_key_pem

    revoke(loaded, ledger)
    assert resolve(keyring.did, ledger).status is ResolutionStatus.REVOKED


def test_keyring_file_contents(ledger, auth_key, keyring_path):
    keyring = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    save_keyring(keyring, keyring_path)
    data = json.loads(keyring_path.read_text())

    assert data["did"] == keyring.did.uri
    assert data["index"] == keyring.did.index.hex()
    assert data["seed1"] == keyring.material.seed1.hex()
    assert data["keyType"] == DEFAULT_KEY_TYPE
    assert "BEGIN PUBLIC KEY" in data["authPublicKeyPem"]


@pytest.mark.skipif(sys.platform.startswith("win"), reason="POSIX permissions")
def test_keyring_permissions(ledger, auth_key, keyring_path):
    save_keyring(create(auth_key, DEFAULT_KEY_TYPE, ledger), keyring_path)
    assert stat.S_IMODE(os.stat(keyring_path).st_mode) == 0o600


def test_keyring_no_silent_overwrite(ledger, auth_key, keyring_path):
    save_keyring(create(auth_key, DEFAULT_KEY_TYPE, ledger), keyring_path)
    with pytest.raises(KeyringExists):
        save_keyring(create(auth_key, DEFAULT_KEY_TYPE, ledger), keyring_path)

    replacement = create(auth_key, DEFAULT_KEY_TYPE, ledger)
    save_keyring(replacement, keyring_path, overwrite=True)
    assert load_keyring(keyring_path).did == replacement.did
    assert [p.name for p in keyring_path.parent.iterdir() if p.name.endswith(".tmp")] == []


def test_keyring_must_match_did(auth_key):
    material = generate_index_material()
    with pytest.raises(ValueError):
        DidKeyRing(did=generate_index_material().did, material=material, auth_public_key=auth_key)


# ---------------------------------------------------------------------------
# Adversarial scenarios
# ---------------------------------------------------------------------------

def _attacker_payload(rng, victim_index, honest_payloads, attacker, auth_pem):
    choice = rng.randrange(6)
    if choice == 0:
        return rng.randbytes(rng.randrange(1, 400))
    if choice == 1 and honest_payloads:
        return rng.choice(honest_payloads)
    if choice == 2:
        return encode_revoke(attacker)
    if choice == 3:
        victim_did = f"did:ott:{victim_index.hex()}"
        fake = _document_bytes(attacker, auth_pem).replace(attacker.did.uri.encode(), victim_did.encode())
        return encode_create(fake, attacker)
    if choice == 4 and honest_payloads:
        tampered = bytearray(rng.choice(honest_payloads))
        tampered[rng.randrange(len(tampered))] ^= 1 << rng.randrange(8)
        return bytes(tampered)
    return encode_create(b'{"id":"spoof"}', attacker)


def test_adversarial_scenarios(auth_key):
    rng = random.Random(1337)
    honest_pem = public_key_pem(auth_key)
    attacker_pem = public_key_pem(keypair_from_seed(bytes([0xEE]) * 32).public)

    for scenario in range(200):
        ledger = SimulatedTangle()
        owner = derive_index_material(rng.randbytes(32), rng.randbytes(32))
        attacker = derive_index_material(rng.randbytes(32), rng.randbytes(32))
        honest_payloads = []
        created = revoked = False

        for _ in range(rng.randrange(3, 12)):
            action = rng.random()
            if action < 0.25 and not created:
                payload = encode_create(_document_bytes(owner, honest_pem), owner)
                honest_payloads.append(payload)
                created = True
            elif action < 0.35 and created:
                payload = encode_revoke(owner)
                honest_payloads.append(payload)
                revoked = True
            else:
                payload = _attacker_payload(rng, owner.index, honest_payloads, attacker, attacker_pem)
            ledger.attach(owner.index, payload)

        result = resolve(parse_did(owner.did.uri), ledger)
        if result.status is ResolutionStatus.VALID:
            assert created, f"scenario {scenario}: Valid without an honest create"
            assert result.document.authentication_method.public_key_pem == honest_pem
        if result.status is ResolutionStatus.REVOKED:
            assert revoked, f"scenario {scenario}: Revoked without an honest revoke"
        if created and not revoked:
            assert result.status is ResolutionStatus.VALID, f"scenario {scenario}"
        if created and revoked:
            assert result.status is ResolutionStatus.REVOKED, f"scenario {scenario}"

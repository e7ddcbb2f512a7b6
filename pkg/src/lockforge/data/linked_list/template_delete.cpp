// Sorted list delete.  Walks to the window, bails out if the key is
// absent, otherwise runs the synthesized unlink block.
#include "list.h"

bool delete_key(int key){
    while(true){
        @@begin-traversal
        struct node * pred = head;
        struct node * curr = head->next;
        while(curr->key < key){
            pred = curr;
            curr = curr->next;
        }
        @@end-traversal
        if(curr->key != key)
            return false;
        @@begin-destructive-update
        @@delete::block1
        @@end-destructive-update
        return true;
    }
}
